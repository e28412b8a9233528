//! Dense eigenvalue helpers used by the desk-scale verification paths.

use nalgebra::{Complex, DMatrix, DVector};

use crate::error::{Error, Result};

/// Eigenvalues of the generalized problem `A x = lambda M x` with `M` SPD.
///
/// Works through the Cholesky factor `M = L L^T`: the similar matrix
/// `L^{-1} A L^{-T}` is handed to a real Schur decomposition, so the returned
/// eigenvalues may be complex.
pub fn generalized_eigenvalues(a: &DMatrix<f64>, m: &DMatrix<f64>) -> Result<Vec<Complex<f64>>> {
    let n = a.nrows();
    assert_eq!(a.ncols(), n);
    assert_eq!(m.nrows(), n);
    assert_eq!(m.ncols(), n);
    let chol = m
        .clone()
        .cholesky()
        .ok_or_else(|| Error::EigenFailure("mass matrix is not positive definite".into()))?;
    let l = chol.l();
    // B = L^{-1} A L^{-T}
    let mut b = a.clone();
    l.solve_lower_triangular_mut(&mut b);
    let mut bt = b.transpose();
    l.solve_lower_triangular_mut(&mut bt);
    let b = bt.transpose();
    complex_eigenvalues(&b)
}

/// Eigenvalues of `M^{-1} A` computed in the metric of an SPD Gram matrix
/// `G = L L^T`: the similar matrix `S = L^T M^{-1} A L^{-T}` is handed to the
/// Schur solver. When `G A`-pairings make the operator dissipative (as for
/// the energy inner product of the assembled generator), `S` is
/// skew-plus-negative-semidefinite, which keeps the computed real parts
/// accurate even at multiple imaginary eigenvalues.
pub fn generalized_eigenvalues_in_metric(
    a: &DMatrix<f64>,
    m: &DMatrix<f64>,
    gram: &DMatrix<f64>,
) -> Result<Vec<Complex<f64>>> {
    let chol_m = m
        .clone()
        .cholesky()
        .ok_or_else(|| Error::EigenFailure("mass matrix is not positive definite".into()))?;
    let chol_g = gram
        .clone()
        .cholesky()
        .ok_or_else(|| Error::EigenFailure("Gram matrix is not positive definite".into()))?;
    let lg = chol_g.l();
    // A L_G^{-T}
    let mut tmp = a.transpose();
    lg.solve_lower_triangular_mut(&mut tmp);
    let a_lgt = tmp.transpose();
    // M^{-1} (A L_G^{-T})
    let minv_a = chol_m.solve(&a_lgt);
    // L_G^T M^{-1} A L_G^{-T}
    let s = lg.transpose() * minv_a;
    complex_eigenvalues(&s)
}

/// Complex eigenvalues of a real square matrix via the real Schur form,
/// after Parlett-Reinsch balancing.
pub fn complex_eigenvalues(b: &DMatrix<f64>) -> Result<Vec<Complex<f64>>> {
    let balanced = balance(b);
    let schur = nalgebra::linalg::Schur::try_new(balanced, 1e-15, 40000)
        .ok_or_else(|| Error::EigenFailure("Schur iteration did not converge".into()))?;
    let eig = schur.complex_eigenvalues();
    Ok(eig.iter().copied().collect())
}

/// Diagonal similarity with powers of two equalizing row and column norms.
/// Exact in floating point, leaves the spectrum unchanged, and substantially
/// improves eigenvalue accuracy for badly scaled matrices.
fn balance(a: &DMatrix<f64>) -> DMatrix<f64> {
    let n = a.nrows();
    let mut m = a.clone();
    let radix = 2.0f64;
    let mut done = false;
    let mut sweeps = 0;
    while !done && sweeps < 100 {
        done = true;
        sweeps += 1;
        for i in 0..n {
            let mut c: f64 = (0..n).filter(|&j| j != i).map(|j| m[(j, i)].abs()).sum();
            let mut r: f64 = (0..n).filter(|&j| j != i).map(|j| m[(i, j)].abs()).sum();
            if c == 0.0 || r == 0.0 {
                continue;
            }
            let s = c + r;
            let mut f = 1.0;
            while c < r / radix {
                c *= radix;
                r /= radix;
                f *= radix;
            }
            while c >= r * radix {
                c /= radix;
                r *= radix;
                f /= radix;
            }
            if (c + r) < 0.95 * s {
                done = false;
                for j in 0..n {
                    m[(i, j)] /= f;
                }
                for j in 0..n {
                    m[(j, i)] *= f;
                }
            }
        }
    }
    m
}

/// Smallest eigenvalue of the symmetric pencil `A x = lambda B x`, `B` SPD.
pub fn smallest_sym_generalized_eigenvalue(a: &DMatrix<f64>, b: &DMatrix<f64>) -> Result<f64> {
    let chol = b
        .clone()
        .cholesky()
        .ok_or_else(|| Error::EigenFailure("Gram matrix is not positive definite".into()))?;
    let l = chol.l();
    let mut c = a.clone();
    l.solve_lower_triangular_mut(&mut c);
    let mut ct = c.transpose();
    l.solve_lower_triangular_mut(&mut ct);
    // symmetrize away the last rounding crumbs before the symmetric solver
    let sym = (&ct + ct.transpose()) * 0.5;
    let eig = sym.symmetric_eigen();
    Ok(eig.eigenvalues.iter().copied().fold(f64::INFINITY, f64::min))
}

/// One eigenvector of `B` for a known eigenvalue, by shifted inverse iteration
/// in complex arithmetic. The eigenvalue estimate must already be accurate.
pub fn eigenvector_for(b: &DMatrix<f64>, lambda: Complex<f64>) -> Result<DVector<Complex<f64>>> {
    let n = b.nrows();
    let shift = lambda + Complex::new(1e-12 * (1.0 + lambda.norm()), 0.0);
    let bc: DMatrix<Complex<f64>> = b.map(|x| Complex::new(x, 0.0));
    let shifted = &bc - DMatrix::from_diagonal_element(n, n, shift);
    let lu = shifted.lu();
    // deterministic start vector
    let mut x: DVector<Complex<f64>> =
        DVector::from_fn(n, |i, _| Complex::new(1.0 + (i as f64 * 0.123).cos(), 0.0));
    x /= Complex::new(x.norm(), 0.0);
    for _ in 0..3 {
        let y = lu
            .solve(&x)
            .ok_or_else(|| Error::EigenFailure("singular shifted system in inverse iteration".into()))?;
        let norm = y.norm();
        if !norm.is_finite() || norm == 0.0 {
            return Err(Error::EigenFailure("inverse iteration broke down".into()));
        }
        x = y / Complex::new(norm, 0.0);
    }
    Ok(x)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn generalized_eigenvalues_match_hand_computed() {
        // A = diag(2, -3), M = diag(2, 1) -> lambdas {1, -3}
        let a = DMatrix::from_diagonal(&DVector::from_vec(vec![2.0, -3.0]));
        let m = DMatrix::from_diagonal(&DVector::from_vec(vec![2.0, 1.0]));
        let mut eig: Vec<f64> = generalized_eigenvalues(&a, &m).unwrap().iter().map(|z| z.re).collect();
        eig.sort_by(f64::total_cmp);
        assert_relative_eq!(eig[0], -3.0, epsilon = 1e-12);
        assert_relative_eq!(eig[1], 1.0, epsilon = 1e-12);
    }

    #[test]
    fn skew_matrix_has_imaginary_spectrum() {
        let b = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, -1.0, 0.0]);
        let eig = complex_eigenvalues(&b).unwrap();
        for z in eig {
            assert!(z.re.abs() < 1e-14);
            assert_relative_eq!(z.im.abs(), 1.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn inverse_iteration_recovers_eigenvector() {
        let b = DMatrix::from_row_slice(2, 2, &[3.0, 1.0, 0.0, 2.0]);
        let x = eigenvector_for(&b, Complex::new(3.0, 0.0)).unwrap();
        let bx = b.map(|v| Complex::new(v, 0.0)) * &x;
        let residual = (&bx - &x * Complex::new(3.0, 0.0)).norm();
        assert!(residual < 1e-9, "residual {residual}");
    }
}
