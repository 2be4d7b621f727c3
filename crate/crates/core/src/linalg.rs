//! Sparse and small dense linear algebra used by the solvers and fits.
//!
//! The CSR + preconditioned-CG path is hand-rolled: it is the hot loop, and
//! keeping every reduction sequential makes solver output bit-reproducible.
//! Small dense work (least-squares fits, eigenvalue checks) goes through
//! nalgebra.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum LinalgError {
    #[error("conjugate gradient did not reach tolerance {tol:e} in {iters} iterations (residual {residual:e})")]
    CgStalled {
        iters: usize,
        tol: f64,
        residual: f64,
    },
    #[error("least-squares fit needs at least {want} samples, got {got}")]
    Underdetermined { got: usize, want: usize },
    #[error("least-squares matrix is rank-deficient")]
    RankDeficient,
}

/// Compressed sparse row matrix with a fixed symmetric pattern.
#[derive(Debug, Clone)]
pub struct Csr {
    pub n: usize,
    pub indptr: Vec<usize>,
    pub indices: Vec<usize>,
    pub data: Vec<f64>,
}

impl Csr {
    /// Build an empty matrix from per-row sorted, deduplicated column lists.
    pub fn from_pattern(rows: &[Vec<usize>]) -> Csr {
        let n = rows.len();
        let mut indptr = Vec::with_capacity(n + 1);
        indptr.push(0);
        let mut indices = Vec::new();
        for row in rows {
            debug_assert!(row.windows(2).all(|w| w[0] < w[1]));
            indices.extend_from_slice(row);
            indptr.push(indices.len());
        }
        let nnz = indices.len();
        Csr {
            n,
            indptr,
            indices,
            data: vec![0.0; nnz],
        }
    }

    pub fn zero_data(&mut self) {
        self.data.fill(0.0);
    }

    /// Index into `data` for entry (row, col); the pattern must contain it.
    pub fn slot(&self, row: usize, col: usize) -> usize {
        let lo = self.indptr[row];
        let hi = self.indptr[row + 1];
        let cols = &self.indices[lo..hi];
        lo + cols.binary_search(&col).expect("entry in sparsity pattern")
    }

    pub fn add_to(&mut self, row: usize, col: usize, value: f64) {
        let s = self.slot(row, col);
        self.data[s] += value;
    }

    pub fn matvec(&self, x: &[f64], y: &mut [f64]) {
        for row in 0..self.n {
            let mut acc = 0.0;
            for k in self.indptr[row]..self.indptr[row + 1] {
                acc += self.data[k] * x[self.indices[k]];
            }
            y[row] = acc;
        }
    }

    pub fn diagonal(&self) -> Vec<f64> {
        let mut d = vec![0.0; self.n];
        for row in 0..self.n {
            for k in self.indptr[row]..self.indptr[row + 1] {
                if self.indices[k] == row {
                    d[row] = self.data[k];
                }
            }
        }
        d
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Diagonally preconditioned conjugate gradient for SPD systems.
/// Convergence: ‖r‖₂ ≤ tol·‖b‖₂ (absolute floor when b = 0).
pub fn pcg(
    a: &Csr,
    b: &[f64],
    x0: Option<&[f64]>,
    tol: f64,
    max_iters: usize,
) -> Result<(Vec<f64>, usize), LinalgError> {
    let n = a.n;
    let norm_b = dot(b, b).sqrt();
    let target = if norm_b > 0.0 { tol * norm_b } else { tol };
    let mut x = x0.map(|v| v.to_vec()).unwrap_or_else(|| vec![0.0; n]);
    let mut r = vec![0.0; n];
    a.matvec(&x, &mut r);
    for i in 0..n {
        r[i] = b[i] - r[i];
    }
    let inv_diag: Vec<f64> = a
        .diagonal()
        .iter()
        .map(|&d| if d.abs() > 0.0 { 1.0 / d } else { 1.0 })
        .collect();
    let mut z: Vec<f64> = r.iter().zip(&inv_diag).map(|(ri, di)| ri * di).collect();
    let mut p = z.clone();
    let mut rz = dot(&r, &z);
    let mut ap = vec![0.0; n];
    let mut residual = dot(&r, &r).sqrt();
    if residual <= target {
        return Ok((x, 0));
    }
    for iter in 1..=max_iters {
        a.matvec(&p, &mut ap);
        let pap = dot(&p, &ap);
        if pap <= 0.0 {
            return Err(LinalgError::CgStalled {
                iters: iter,
                tol,
                residual,
            });
        }
        let alpha = rz / pap;
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        residual = dot(&r, &r).sqrt();
        if residual <= target {
            return Ok((x, iter));
        }
        for i in 0..n {
            z[i] = r[i] * inv_diag[i];
        }
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
    }
    Err(LinalgError::CgStalled {
        iters: max_iters,
        tol,
        residual,
    })
}

/// Least squares with a real design matrix and complex observations:
/// one column-scaled QR factorization, two real solves.
/// Returns (coefficients, relative ℓ2 residual).
pub fn lstsq_complex(
    design: &DMatrix<f64>,
    values: &[Complex64],
) -> Result<(Vec<Complex64>, f64), LinalgError> {
    let (m, k) = (design.nrows(), design.ncols());
    if values.len() != m {
        return Err(LinalgError::Underdetermined {
            got: values.len(),
            want: m,
        });
    }
    if m < k {
        return Err(LinalgError::Underdetermined { got: m, want: k });
    }
    // Scale columns to unit norm to tame the wildly different t-power sizes.
    let mut scaled = design.clone();
    let mut col_norms = vec![0.0; k];
    for j in 0..k {
        let nrm = scaled.column(j).norm();
        if nrm == 0.0 {
            return Err(LinalgError::RankDeficient);
        }
        col_norms[j] = nrm;
        scaled.column_mut(j).scale_mut(1.0 / nrm);
    }
    let qr = scaled.qr();
    let q_t = qr.q().transpose();
    let r = qr.r();
    let re = DVector::from_iterator(m, values.iter().map(|z| z.re));
    let im = DVector::from_iterator(m, values.iter().map(|z| z.im));
    let sol_re = r
        .solve_upper_triangular(&(&q_t * re))
        .ok_or(LinalgError::RankDeficient)?;
    let sol_im = r
        .solve_upper_triangular(&(&q_t * im))
        .ok_or(LinalgError::RankDeficient)?;
    let coeffs: Vec<Complex64> = (0..k)
        .map(|j| Complex64::new(sol_re[j], sol_im[j]) / col_norms[j])
        .collect();
    let mut resid_sq = 0.0;
    let mut norm_sq = 0.0;
    for (i, z) in values.iter().enumerate() {
        let mut fit = Complex64::new(0.0, 0.0);
        for j in 0..k {
            fit += coeffs[j] * design[(i, j)];
        }
        resid_sq += (z - fit).norm_sqr();
        norm_sq += z.norm_sqr();
    }
    let rel = if norm_sq > 0.0 {
        (resid_sq / norm_sq).sqrt()
    } else {
        resid_sq.sqrt()
    };
    Ok((coeffs, rel))
}

/// Eigenvalues of a symmetric 3×3 (or 2×2 padded) matrix, ascending.
pub fn sym_eigenvalues(m: &crate::geom::Mat3, dim: usize) -> Vec<f64> {
    let a = DMatrix::from_fn(dim, dim, |i, j| m[i][j]);
    let sym = nalgebra::SymmetricEigen::new(a);
    let mut ev: Vec<f64> = sym.eigenvalues.iter().copied().collect();
    ev.sort_by(f64::total_cmp);
    ev
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pcg_solves_small_spd_system() {
        // Tridiagonal [2,-1] Laplacian, n=50.
        let n = 50;
        let rows: Vec<Vec<usize>> = (0..n)
            .map(|i| {
                let mut r = vec![i];
                if i > 0 {
                    r.push(i - 1);
                }
                if i + 1 < n {
                    r.push(i + 1);
                }
                r.sort();
                r
            })
            .collect();
        let mut a = Csr::from_pattern(&rows);
        for i in 0..n {
            a.add_to(i, i, 2.0);
            if i > 0 {
                a.add_to(i, i - 1, -1.0);
            }
            if i + 1 < n {
                a.add_to(i, i + 1, -1.0);
            }
        }
        let x_true: Vec<f64> = (0..n).map(|i| (i as f64 * 0.3).sin()).collect();
        let mut b = vec![0.0; n];
        a.matvec(&x_true, &mut b);
        let (x, iters) = pcg(&a, &b, None, 1e-12, 1000).unwrap();
        assert!(iters <= n + 5);
        for (xi, ti) in x.iter().zip(&x_true) {
            assert!((xi - ti).abs() < 1e-9);
        }
    }

    #[test]
    fn lstsq_recovers_exact_model() {
        let ts = [8.0, 12.0, 16.0, 24.0, 32.0];
        let design = DMatrix::from_fn(5, 4, |i, j| {
            let t: f64 = ts[i];
            match j {
                0 => t * t,
                1 => 1.0,
                2 => t.powi(-2),
                _ => t.powi(-4),
            }
        });
        let truth = [
            Complex64::new(1.5, -0.25),
            Complex64::new(-3.0, 1.0),
            Complex64::new(0.125, 2.0),
            Complex64::new(-0.5, -0.75),
        ];
        let values: Vec<Complex64> = ts
            .iter()
            .map(|&t| {
                truth[0] * t * t + truth[1] + truth[2] * t.powi(-2) + truth[3] * t.powi(-4)
            })
            .collect();
        let (coeffs, rel) = lstsq_complex(&design, &values).unwrap();
        assert!(rel < 1e-12);
        // The t⁻² and t⁻⁴ columns are nearly collinear on this window, so
        // coefficient recovery is a few orders above machine precision.
        for (c, t) in coeffs.iter().zip(&truth) {
            assert!((c - t).norm() < 1e-8 * t.norm(), "{c} vs {t}");
        }
    }

    #[test]
    fn sym_eigenvalues_of_diagonal() {
        let m = [[4.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 2.0]];
        let ev = sym_eigenvalues(&m, 3);
        assert_eq!(ev, vec![1.0, 2.0, 4.0]);
    }
}
