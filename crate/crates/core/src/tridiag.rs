//! Periodic (cyclic) tridiagonal systems.
//!
//! Row `i` reads `lower[i] x[i-1] + diag[i] x[i] + upper[i] x[i+1]` with
//! indices taken modulo `n`. Systems with `n >= 4` are solved with the
//! Thomas algorithm plus a Sherman-Morrison correction for the two corner
//! entries; smaller ones fall back to dense elimination.

use crate::error::{MfgError, Result};
use crate::grid::stencil::{next, prev};

#[derive(Debug, Clone, PartialEq)]
pub struct CyclicTridiagonal {
    pub lower: Vec<f64>,
    pub diag: Vec<f64>,
    pub upper: Vec<f64>,
}

impl CyclicTridiagonal {
    pub fn zeros(n: usize) -> Self {
        Self {
            lower: vec![0.0; n],
            diag: vec![0.0; n],
            upper: vec![0.0; n],
        }
    }

    pub fn len(&self) -> usize {
        self.diag.len()
    }

    pub fn is_empty(&self) -> bool {
        self.diag.is_empty()
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        let n = self.len();
        (0..n)
            .map(|i| self.lower[i] * x[prev(i, n)] + self.diag[i] * x[i] + self.upper[i] * x[next(i, n)])
            .collect()
    }

    pub fn transpose(&self) -> Self {
        let n = self.len();
        Self {
            lower: (0..n).map(|i| self.upper[prev(i, n)]).collect(),
            diag: self.diag.clone(),
            upper: (0..n).map(|i| self.lower[next(i, n)]).collect(),
        }
    }

    /// Row-major dense copy; coincident wrap entries (n <= 2) are summed.
    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        let n = self.len();
        let mut a = vec![vec![0.0; n]; n];
        for i in 0..n {
            a[i][prev(i, n)] += self.lower[i];
            a[i][i] += self.diag[i];
            a[i][next(i, n)] += self.upper[i];
        }
        a
    }

    pub fn solve(&self, rhs: &[f64]) -> Result<Vec<f64>> {
        let n = self.len();
        if rhs.len() != n {
            return Err(MfgError::LinearSolveFailed(format!(
                "right-hand side has length {}, system has {n} rows",
                rhs.len()
            )));
        }
        let x = if n < 4 {
            dense_solve(self.to_dense(), rhs.to_vec())?
        } else {
            self.solve_sherman_morrison(rhs)?
        };
        if x.iter().any(|v| !v.is_finite()) {
            return Err(MfgError::LinearSolveFailed(
                "non-finite solution (singular or ill-conditioned system)".into(),
            ));
        }
        // A singular system can still produce finite garbage; the residual
        // then stays comparable to the right-hand side.
        let ax = self.matvec(&x);
        let b_max = rhs.iter().fold(0.0, |m: f64, v| m.max(v.abs()));
        let r_max = ax.iter().zip(rhs).fold(0.0, |m: f64, (a, b)| m.max((a - b).abs()));
        if r_max > 1e-6 * b_max {
            return Err(MfgError::LinearSolveFailed(format!(
                "residual {r_max:.3e} against right-hand side {b_max:.3e} (singular or ill-conditioned system)"
            )));
        }
        Ok(x)
    }

    fn solve_sherman_morrison(&self, rhs: &[f64]) -> Result<Vec<f64>> {
        let n = self.len();
        let alpha = self.lower[0];
        let beta = self.upper[n - 1];
        let gamma = if self.diag[0] != 0.0 { -self.diag[0] } else { -1.0 };

        let mut b = self.diag.clone();
        b[0] -= gamma;
        b[n - 1] -= alpha * beta / gamma;

        // Forward elimination shared by both right-hand sides.
        let mut c_prime = vec![0.0; n];
        let mut denom = vec![0.0; n];
        denom[0] = b[0];
        check_pivot(denom[0], 0)?;
        c_prime[0] = self.upper[0] / denom[0];
        for i in 1..n {
            denom[i] = b[i] - self.lower[i] * c_prime[i - 1];
            check_pivot(denom[i], i)?;
            if i + 1 < n {
                c_prime[i] = self.upper[i] / denom[i];
            }
        }
        let thomas = |r: &[f64]| -> Vec<f64> {
            let mut y = vec![0.0; n];
            y[0] = r[0] / denom[0];
            for i in 1..n {
                y[i] = (r[i] - self.lower[i] * y[i - 1]) / denom[i];
            }
            for i in (0..n - 1).rev() {
                y[i] -= c_prime[i] * y[i + 1];
            }
            y
        };

        let y = thomas(rhs);
        let mut u = vec![0.0; n];
        u[0] = gamma;
        u[n - 1] = beta;
        let z = thomas(&u);

        let v_last = alpha / gamma;
        let denom_sm = 1.0 + z[0] + v_last * z[n - 1];
        if denom_sm == 0.0 || !denom_sm.is_finite() {
            return Err(MfgError::LinearSolveFailed(
                "singular Sherman-Morrison correction".into(),
            ));
        }
        let factor = (y[0] + v_last * y[n - 1]) / denom_sm;
        Ok(y.iter().zip(&z).map(|(yi, zi)| yi - factor * zi).collect())
    }
}

fn check_pivot(p: f64, row: usize) -> Result<()> {
    if p == 0.0 || !p.is_finite() {
        Err(MfgError::LinearSolveFailed(format!("zero pivot at row {row}")))
    } else {
        Ok(())
    }
}

/// Gaussian elimination with partial pivoting.
fn dense_solve(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Result<Vec<f64>> {
    let n = b.len();
    for col in 0..n {
        let piv = (col..n)
            .max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))
            .unwrap_or(col);
        if a[piv][col] == 0.0 {
            return Err(MfgError::LinearSolveFailed(format!("singular matrix at column {col}")));
        }
        a.swap(col, piv);
        b.swap(col, piv);
        for row in col + 1..n {
            let f = a[row][col] / a[col][col];
            for k in col..n {
                a[row][k] -= f * a[col][k];
            }
            b[row] -= f * b[col];
        }
    }
    let mut x = vec![0.0; n];
    for row in (0..n).rev() {
        let s: f64 = (row + 1..n).map(|k| a[row][k] * x[k]).sum();
        x[row] = (b[row] - s) / a[row][row];
    }
    Ok(x)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn random_system(n: usize, seed: u64) -> (CyclicTridiagonal, Vec<f64>) {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let mut m = CyclicTridiagonal::zeros(n);
        for i in 0..n {
            m.lower[i] = rng.random_range(-1.0..1.0);
            m.upper[i] = rng.random_range(-1.0..1.0);
            m.diag[i] = 3.0 + rng.random_range(0.0..1.0);
        }
        let b = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
        (m, b)
    }

    #[test]
    fn solves_against_dense_reference() {
        for n in [1, 2, 3, 4, 5, 17, 64] {
            let (m, b) = random_system(n, n as u64);
            let x = m.solve(&b).unwrap();
            let reference = dense_solve(m.to_dense(), b.clone()).unwrap();
            for (a, r) in x.iter().zip(&reference) {
                assert!((a - r).abs() < 1e-12, "n={n}");
            }
        }
    }

    #[test]
    fn transpose_matches_dense_transpose() {
        for n in [1, 2, 3, 8] {
            let (m, _) = random_system(n, 7 + n as u64);
            let d = m.to_dense();
            let dt = m.transpose().to_dense();
            for i in 0..n {
                for j in 0..n {
                    assert!((d[i][j] - dt[j][i]).abs() < 1e-15);
                }
            }
        }
    }

    #[test]
    fn singular_system_is_reported() {
        let m = CyclicTridiagonal {
            lower: vec![1.0; 6],
            diag: vec![-2.0; 6],
            upper: vec![1.0; 6],
        };
        assert!(m.solve(&[1.0; 6]).is_err());
    }

    proptest! {
        #[test]
        fn residual_is_small(n in 4usize..40, seed in any::<u64>()) {
            let (m, b) = random_system(n, seed);
            let x = m.solve(&b).unwrap();
            let r = m.matvec(&x);
            for (ri, bi) in r.iter().zip(&b) {
                prop_assert!((ri - bi).abs() < 1e-12);
            }
        }
    }
}
