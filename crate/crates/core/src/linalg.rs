//! Small dense symmetric positive-definite solves.

use crate::error::{Error, Result};

/// Pivots at or below this fraction of the largest diagonal entry are
/// treated as numerically zero.
const RELATIVE_PIVOT_TOL: f64 = 1e-12;

/// Lower-triangular Cholesky factor of an `n x n` row-major SPD matrix.
#[derive(Debug, Clone)]
pub struct Cholesky {
    n: usize,
    l: Vec<f64>,
}

impl Cholesky {
    pub fn factor(a: &[f64], n: usize) -> Result<Self> {
        if a.len() != n * n {
            return Err(Error::shape(format!("{n}x{n}"), format!("{} values", a.len())));
        }
        let max_diag = (0..n).map(|i| a[i * n + i].abs()).fold(0.0, f64::max);
        let tol = RELATIVE_PIVOT_TOL * max_diag;
        let mut l = vec![0.0; n * n];
        for j in 0..n {
            let mut d = a[j * n + j];
            for k in 0..j {
                d -= l[j * n + k] * l[j * n + k];
            }
            if !(d > tol) {
                return Err(Error::Singular(format!(
                    "pivot {j} is {d:e} (tolerance {tol:e})"
                )));
            }
            let d = d.sqrt();
            l[j * n + j] = d;
            for i in j + 1..n {
                let mut s = a[i * n + j];
                for k in 0..j {
                    s -= l[i * n + k] * l[j * n + k];
                }
                l[i * n + j] = s / d;
            }
        }
        Ok(Cholesky { n, l })
    }

    /// Solves `A x = b` in place.
    pub fn solve_in_place(&self, b: &mut [f64]) {
        let n = self.n;
        for i in 0..n {
            let mut s = b[i];
            for k in 0..i {
                s -= self.l[i * n + k] * b[k];
            }
            b[i] = s / self.l[i * n + i];
        }
        for i in (0..n).rev() {
            let mut s = b[i];
            for k in i + 1..n {
                s -= self.l[k * n + i] * b[k];
            }
            b[i] = s / self.l[i * n + i];
        }
    }
}

/// Least-squares polynomial coefficients (constant term first) of `ys`
/// sampled at `ts`.
pub fn polyfit(ts: &[f64], ys: &[f64], degree: usize) -> Result<Vec<f64>> {
    let p = degree + 1;
    if ts.len() < p {
        return Err(Error::IllPosed(format!(
            "{} points cannot determine a degree-{degree} polynomial",
            ts.len()
        )));
    }
    let mut gram = vec![0.0; p * p];
    let mut rhs = vec![0.0; p];
    let mut powers = vec![0.0; p];
    for (&t, &y) in ts.iter().zip(ys) {
        let mut v = 1.0;
        for pw in powers.iter_mut() {
            *pw = v;
            v *= t;
        }
        for i in 0..p {
            rhs[i] += powers[i] * y;
            for j in 0..p {
                gram[i * p + j] += powers[i] * powers[j];
            }
        }
    }
    let chol = Cholesky::factor(&gram, p).map_err(|e| Error::IllPosed(e.to_string()))?;
    chol.solve_in_place(&mut rhs);
    Ok(rhs)
}
