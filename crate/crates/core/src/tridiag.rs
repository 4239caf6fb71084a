//! Thomas algorithm with a reusable factorization.

use crate::error::{Error, Result};

/// LU factors of a tridiagonal matrix, kept so that repeated solves with a
/// fixed operator cost one forward and one backward sweep each.
#[derive(Debug, Clone)]
pub struct Tridiagonal {
    lower: Vec<f64>,
    upper_scaled: Vec<f64>,
    pivots: Vec<f64>,
}

impl Tridiagonal {
    /// `lower[i]` multiplies `x[i-1]` in row `i` (unused for `i = 0`),
    /// `upper[i]` multiplies `x[i+1]` (unused for the last row).
    pub fn factor(lower: &[f64], diag: &[f64], upper: &[f64]) -> Result<Self> {
        let n = diag.len();
        if lower.len() != n || upper.len() != n {
            return Err(Error::GridMismatch(format!(
                "tridiagonal bands of lengths {}, {}, {}",
                lower.len(),
                n,
                upper.len()
            )));
        }
        let mut pivots = vec![0.0; n];
        let mut upper_scaled = vec![0.0; n];
        let mut prev = 0.0;
        for i in 0..n {
            let pivot = diag[i] - if i > 0 { lower[i] * prev } else { 0.0 };
            if pivot.abs() < 1e-300 || !pivot.is_finite() {
                return Err(Error::SingularSystem { row: i });
            }
            pivots[i] = pivot;
            prev = if i + 1 < n { upper[i] / pivot } else { 0.0 };
            upper_scaled[i] = prev;
        }
        Ok(Self {
            lower: lower.to_vec(),
            upper_scaled,
            pivots,
        })
    }

    pub fn len(&self) -> usize {
        self.pivots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pivots.is_empty()
    }

    /// Overwrites `rhs` with the solution.
    pub fn solve_in_place(&self, rhs: &mut [f64]) -> Result<()> {
        let n = self.len();
        if rhs.len() != n {
            return Err(Error::GridMismatch(format!("rhs of length {} for {n} rows", rhs.len())));
        }
        rhs[0] /= self.pivots[0];
        for i in 1..n {
            rhs[i] = (rhs[i] - self.lower[i] * rhs[i - 1]) / self.pivots[i];
        }
        for i in (0..n - 1).rev() {
            rhs[i] -= self.upper_scaled[i] * rhs[i + 1];
        }
        if rhs.iter().all(|v| v.is_finite()) {
            Ok(())
        } else {
            Err(Error::NonFinite("tridiagonal solve"))
        }
    }
}

/// Bands of the centered operator `c d/dxi - mu d^2/dxi^2 + k` on interior
/// rows, with identity rows at both ends for Dirichlet data.
pub(crate) fn advection_diffusion_bands(n: usize, dxi: f64, c: f64, mu: f64, k: f64) -> [Vec<f64>; 3] {
    let h2 = dxi * dxi;
    let mut lower = vec![-c / (2.0 * dxi) - mu / h2; n];
    let mut diag = vec![2.0 * mu / h2 + k; n];
    let mut upper = vec![c / (2.0 * dxi) - mu / h2; n];
    lower[0] = 0.0;
    upper[0] = 0.0;
    diag[0] = 1.0;
    lower[n - 1] = 0.0;
    upper[n - 1] = 0.0;
    diag[n - 1] = 1.0;
    [lower, diag, upper]
}

#[cfg(test)]
mod tests {
    use super::*;

    fn multiply(lower: &[f64], diag: &[f64], upper: &[f64], x: &[f64]) -> Vec<f64> {
        let n = x.len();
        (0..n)
            .map(|i| {
                let mut s = diag[i] * x[i];
                if i > 0 {
                    s += lower[i] * x[i - 1];
                }
                if i + 1 < n {
                    s += upper[i] * x[i + 1];
                }
                s
            })
            .collect()
    }

    #[test]
    fn solves_diagonally_dominant_system() {
        let n = 50;
        let lower: Vec<f64> = (0..n).map(|i| -1.0 - 0.01 * i as f64).collect();
        let diag: Vec<f64> = (0..n).map(|i| 4.0 + (i as f64).sin()).collect();
        let upper: Vec<f64> = (0..n).map(|i| 0.5 + 0.02 * i as f64).collect();
        let x: Vec<f64> = (0..n).map(|i| (0.3 * i as f64).cos()).collect();
        let mut b = multiply(&lower, &diag, &upper, &x);
        let t = Tridiagonal::factor(&lower, &diag, &upper).unwrap();
        t.solve_in_place(&mut b).unwrap();
        for (u, v) in b.iter().zip(&x) {
            assert!((u - v).abs() < 1e-13);
        }
    }

    #[test]
    fn singular_system_detected() {
        let z = vec![0.0; 3];
        assert!(matches!(
            Tridiagonal::factor(&z, &z, &z),
            Err(Error::SingularSystem { row: 0 })
        ));
    }

    #[test]
    fn dirichlet_rows_pass_boundary_data() {
        let [l, d, u] = advection_diffusion_bands(11, 0.1, 2.0, 1.0, 2.0);
        let t = Tridiagonal::factor(&l, &d, &u).unwrap();
        let mut b = vec![2.0; 11];
        b[0] = 0.0;
        b[10] = 1.0;
        t.solve_in_place(&mut b).unwrap();
        assert_eq!(b[0], 0.0);
        assert_eq!(b[10], 1.0);
    }
}
