//! Matrix-free iterative solvers.
//!
//! Everything here is strictly sequential with a fixed reduction order, so a
//! solve is bit-reproducible for identical inputs.

use nalgebra::DVector;

use crate::error::{Error, Result};
use crate::linalg::sparse::CsrMatrix;

/// Abstract linear operator y = A x.
pub trait LinOp {
    fn dim(&self) -> usize;
    fn apply(&self, x: &DVector<f64>, y: &mut DVector<f64>);
}

impl LinOp for CsrMatrix {
    fn dim(&self) -> usize {
        debug_assert_eq!(self.nrows(), self.ncols());
        self.nrows()
    }

    fn apply(&self, x: &DVector<f64>, y: &mut DVector<f64>) {
        self.mul_vec_into(x, y);
    }
}

pub struct CgOutcome {
    pub iterations: usize,
    pub relative_residual: f64,
}

/// Preconditioned conjugate gradients for SPD systems, Jacobi preconditioner.
///
/// `x` carries the initial guess on entry and the solution on exit. The
/// residual is measured relative to `‖b‖`; `b = 0` short-circuits to `x = 0`.
pub fn cg_jacobi(
    a: &dyn LinOp,
    diag: &DVector<f64>,
    b: &DVector<f64>,
    x: &mut DVector<f64>,
    rel_tol: f64,
    max_iters: usize,
) -> Result<CgOutcome> {
    let n = a.dim();
    assert_eq!(b.len(), n);
    assert_eq!(x.len(), n);
    let b_norm = b.norm();
    if b_norm == 0.0 {
        x.fill(0.0);
        return Ok(CgOutcome { iterations: 0, relative_residual: 0.0 });
    }
    let inv_diag = diag.map(|d| 1.0 / d);
    let mut ax = DVector::zeros(n);
    a.apply(x, &mut ax);
    let mut r = b - &ax;
    let mut z = r.component_mul(&inv_diag);
    let mut p = z.clone();
    let mut rz = r.dot(&z);
    let mut res = r.norm() / b_norm;
    let mut iters = 0;
    while res > rel_tol && iters < max_iters {
        a.apply(&p, &mut ax);
        let denom = p.dot(&ax);
        if denom <= 0.0 {
            break; // lost positive definiteness to rounding
        }
        let alpha = rz / denom;
        x.axpy(alpha, &p, 1.0);
        r.axpy(-alpha, &ax, 1.0);
        z = r.component_mul(&inv_diag);
        let rz_new = r.dot(&z);
        let beta = rz_new / rz;
        rz = rz_new;
        p = &z + beta * &p;
        res = r.norm() / b_norm;
        iters += 1;
    }
    if res > rel_tol {
        return Err(Error::LinearSolveFailure {
            context: "cg",
            achieved: res,
            tol: rel_tol,
            iterations: iters,
            step: None,
        });
    }
    Ok(CgOutcome { iterations: iters, relative_residual: res })
}

pub struct GmresOutcome {
    pub iterations: usize,
    pub relative_residual: f64,
}

/// Flexible right-preconditioned GMRES.
///
/// Minimizes the true residual of `A x = b`; the preconditioner may itself be
/// an inexact inner solve (flexible variant stores the preconditioned basis).
pub fn fgmres(
    a: &dyn LinOp,
    precond: &dyn Fn(&DVector<f64>) -> DVector<f64>,
    b: &DVector<f64>,
    x: &mut DVector<f64>,
    rel_tol: f64,
    restart: usize,
    max_iters: usize,
    context: &'static str,
) -> Result<GmresOutcome> {
    let n = a.dim();
    assert_eq!(b.len(), n);
    assert_eq!(x.len(), n);
    let b_norm = b.norm();
    if b_norm == 0.0 {
        x.fill(0.0);
        return Ok(GmresOutcome { iterations: 0, relative_residual: 0.0 });
    }
    let m = restart.min(n).max(1);
    let mut total_iters = 0usize;
    let mut work = DVector::zeros(n);

    loop {
        a.apply(x, &mut work);
        let r0 = b - &work;
        let beta = r0.norm();
        let mut rel = beta / b_norm;
        if rel <= rel_tol {
            return Ok(GmresOutcome { iterations: total_iters, relative_residual: rel });
        }
        if total_iters >= max_iters {
            return Err(Error::LinearSolveFailure {
                context,
                achieved: rel,
                tol: rel_tol,
                iterations: total_iters,
                step: None,
            });
        }

        let mut v: Vec<DVector<f64>> = vec![&r0 / beta];
        let mut z: Vec<DVector<f64>> = Vec::new();
        // Hessenberg columns and Givens rotation pairs
        let mut h: Vec<Vec<f64>> = Vec::new();
        let mut cs: Vec<f64> = Vec::new();
        let mut sn: Vec<f64> = Vec::new();
        let mut g = vec![0.0; m + 1];
        g[0] = beta;
        let mut k_used = 0;

        for k in 0..m {
            if total_iters >= max_iters {
                break;
            }
            let zk = precond(&v[k]);
            a.apply(&zk, &mut work);
            z.push(zk);
            let mut w = work.clone();
            let mut hk = vec![0.0; k + 2];
            for (i, vi) in v.iter().enumerate() {
                let hik = w.dot(vi);
                hk[i] = hik;
                w.axpy(-hik, vi, 1.0);
            }
            let wn = w.norm();
            hk[k + 1] = wn;
            // apply accumulated rotations to the new column
            for i in 0..k {
                let t = cs[i] * hk[i] + sn[i] * hk[i + 1];
                hk[i + 1] = -sn[i] * hk[i] + cs[i] * hk[i + 1];
                hk[i] = t;
            }
            let denom = (hk[k] * hk[k] + hk[k + 1] * hk[k + 1]).sqrt();
            let (c, s) = if denom == 0.0 { (1.0, 0.0) } else { (hk[k] / denom, hk[k + 1] / denom) };
            cs.push(c);
            sn.push(s);
            hk[k] = c * hk[k] + s * hk[k + 1];
            hk[k + 1] = 0.0;
            g[k + 1] = -s * g[k];
            g[k] *= c;
            h.push(hk);
            total_iters += 1;
            k_used = k + 1;
            rel = g[k + 1].abs() / b_norm;
            if rel <= rel_tol || wn == 0.0 {
                break;
            }
            v.push(w / wn);
        }

        // back substitution for y in the k_used x k_used triangular system
        let mut y = vec![0.0; k_used];
        for i in (0..k_used).rev() {
            let mut acc = g[i];
            for j in (i + 1)..k_used {
                acc -= h[j][i] * y[j];
            }
            y[i] = acc / h[i][i];
        }
        for (j, yj) in y.iter().enumerate() {
            x.axpy(*yj, &z[j], 1.0);
        }
        // loop back: recompute the true residual and either return or restart
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::sparse::CsrMatrix;

    fn spd_test_matrix(n: usize) -> CsrMatrix {
        let mut t = Vec::new();
        for i in 0..n {
            t.push((i, i, 4.0));
            if i + 1 < n {
                t.push((i, i + 1, -1.0));
                t.push((i + 1, i, -1.0));
            }
        }
        CsrMatrix::from_triplets(n, n, t)
    }

    #[test]
    fn cg_solves_spd_system() {
        let a = spd_test_matrix(50);
        let x_true = DVector::from_fn(50, |i, _| (i as f64 * 0.37).sin());
        let b = a.mul_vec(&x_true);
        let mut x = DVector::zeros(50);
        let out = cg_jacobi(&a, &a.diagonal(), &b, &mut x, 1e-13, 500).unwrap();
        assert!(out.relative_residual <= 1e-13);
        assert!((&x - &x_true).norm() < 1e-10);
    }

    #[test]
    fn fgmres_solves_nonsymmetric_system() {
        let n = 40;
        let mut t = Vec::new();
        for i in 0..n {
            t.push((i, i, 3.0));
            if i + 1 < n {
                t.push((i, i + 1, -1.2));
                t.push((i + 1, i, -0.7));
            }
        }
        let a = CsrMatrix::from_triplets(n, n, t);
        let x_true = DVector::from_fn(n, |i, _| 1.0 / (1.0 + i as f64));
        let b = a.mul_vec(&x_true);
        let mut x = DVector::zeros(n);
        let diag = a.diagonal();
        let pre = |r: &DVector<f64>| r.component_div(&diag);
        let out = fgmres(&a, &pre, &b, &mut x, 1e-12, 30, 500, "test").unwrap();
        assert!(out.relative_residual <= 1e-12);
        assert!((&x - &x_true).norm() < 1e-9);
    }

    #[test]
    fn zero_rhs_returns_zero() {
        let a = spd_test_matrix(10);
        let b = DVector::zeros(10);
        let mut x = DVector::from_element(10, 5.0);
        cg_jacobi(&a, &a.diagonal(), &b, &mut x, 1e-12, 10).unwrap();
        assert_eq!(x, DVector::zeros(10));
    }
}
