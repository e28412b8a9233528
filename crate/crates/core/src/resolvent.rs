//! Well-posedness verification: solvability of `(I - A) U = F`, the
//! dissipativity margin, and the discrete coercivity constant of the
//! resolvent bilinear form.

use nalgebra::{DMatrix, DVector};

use crate::energy::boundary_dissipation;
use crate::error::{Error, Result};
use crate::linalg::dense::smallest_sym_generalized_eigenvalue;
use crate::linalg::fgmres;
use crate::operators::{DiscreteSystem, FieldState, ShiftedGeneratorOp};

const RESOLVENT_TOL: f64 = 1e-10;
const RESOLVENT_MAX_ITERS: usize = 4000;
const GMRES_RESTART: usize = 150;

#[derive(Debug, Clone, serde::Serialize)]
pub struct ResolventReport {
    /// Relative residual of the linear solve.
    pub residual: f64,
    pub iterations: usize,
    /// Worst deviation of `(A U, U)_H + flux(U)` over the probe states.
    pub dissipativity_margin: f64,
}

/// Solves `(I - A) U = F` in the mass-weighted form `(M - At) U = M F`.
pub fn solve_resolvent(sys: &DiscreteSystem, rhs: &FieldState) -> Result<(FieldState, ResolventReport)> {
    if rhs.ndof() != sys.ndof {
        return Err(Error::DimensionMismatch { expected: sys.ndof, got: rhs.ndof() });
    }
    let n = 4 * sys.ndof;
    let f = rhs.to_flat();
    let mut b = DVector::zeros(n);
    sys.mass_apply_flat(&f, &mut b);
    let op = ShiftedGeneratorOp { sys, shift: 1.0 };
    let pre = |r: &DVector<f64>| sys.mass_precondition_flat(r);
    let mut x = DVector::zeros(n);
    let out = fgmres(&op, &pre, &b, &mut x, RESOLVENT_TOL, GMRES_RESTART, RESOLVENT_MAX_ITERS, "resolvent")?;
    let report = ResolventReport {
        residual: out.relative_residual,
        iterations: out.iterations,
        dissipativity_margin: 0.0,
    };
    Ok((FieldState::from_flat(&x, rhs.time), report))
}

/// Probes the two inequalities of the maximal-dissipativity argument on
/// seeded random states: `(A U, U)_H = -flux(U)` to rounding and
/// `((I - A) U, U)_H >= (U, U)_H`. Returns the worst normalized deviation of
/// the identity.
pub fn dissipativity_check(sys: &DiscreteSystem, samples: usize) -> f64 {
    assert!(samples >= 1);
    let mut margin = 0.0f64;
    for seed in 0..samples as u64 {
        let s = FieldState::random_seeded(sys.ndof, 0x5eed_0000 + seed);
        let pairing = sys.generator_energy_pairing(&s);
        let flux = boundary_dissipation(sys, &s);
        let norm2 = sys.energy_inner_product(&s, &s).expect("dimensions match");
        margin = margin.max((pairing + flux).abs() / norm2.max(1e-300));
        // ((I - A) U, U)_H = ||U||^2 + flux >= ||U||^2
        let shifted = norm2 - pairing;
        assert!(
            shifted >= norm2 * (1.0 - 1e-12),
            "resolvent positivity violated: {shifted} < {norm2}"
        );
    }
    margin
}

/// Discrete coercivity constant of the resolvent form.
///
/// Symmetric part of the (u, E) bilinear form: `K + M0 + (A+1) BG` on the
/// displacement block and `Kcurl/mu + Meps + Btau` on the electric block (the
/// Q and piezo cross terms are skew and cancel exactly). The Gram matrix is
/// the discrete H1 x W norm: `Kgrad + M0` and `Kcurl + M0 + Btau`.
pub fn coercivity_estimate(sys: &DiscreteSystem, dense_cap: usize) -> Result<f64> {
    let dof = 2 * sys.ndof;
    if dof > dense_cap {
        return Err(Error::TooLargeForDense { dof, cap: dense_cap });
    }
    let n = sys.ndof;
    let k = sys.k.to_dense();
    let m0 = sys.m0.to_dense();
    let bg = sys.bg.to_dense();
    let btau = sys.btau.to_dense();
    let kcurl = sys.kcurl1.to_dense();
    let meps = sys.meps.to_dense();
    let kgrad = sys.kgrad.to_dense();
    let a = sys.material.gain_a;

    let mut form = DMatrix::zeros(dof, dof);
    form.view_mut((0, 0), (n, n)).copy_from(&(&k + &m0 + (a + 1.0) * &bg));
    form.view_mut((n, n), (n, n))
        .copy_from(&(&kcurl / sys.material.mu + &meps + &btau));

    let mut gram = DMatrix::zeros(dof, dof);
    gram.view_mut((0, 0), (n, n)).copy_from(&(&kgrad + &m0));
    gram.view_mut((n, n), (n, n)).copy_from(&(&kcurl + &m0 + &btau));

    smallest_sym_generalized_eigenvalue(&form, &gram)
}

/// Worst entry of the symmetrized (u, E) cross blocks of the resolvent form;
/// zero in exact arithmetic because `Q(E x nu) . u' - Q* u . (E' x nu)` and
/// the piezo pair are antisymmetric.
pub fn cross_block_symmetry_defect(sys: &DiscreteSystem) -> f64 {
    let upper = sys.p.to_dense().transpose() * -1.0 + sys.tq.to_dense(); // u-row, E-col
    let lower = sys.p.to_dense() - sys.tq.to_dense().transpose(); // E-row, u-col
    let sym = (&upper + lower.transpose()) * 0.5;
    sym.iter().fold(0.0f64, |acc, v| acc.max(v.abs()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::build_grid;
    use crate::materials::{ElasticityTensor, MaterialSet, PiezoTensor, QField};
    use crate::operators::assemble;

    fn material(q: QField) -> MaterialSet {
        MaterialSet {
            elasticity: ElasticityTensor::isotropic(1.0, 1.0),
            piezo: PiezoTensor::zero(),
            eps: 1.0,
            mu: 1.0,
            gain_a: 1.0,
            q_field: q,
        }
    }

    fn generic_system() -> DiscreteSystem {
        let g = build_grid([1.0, 1.0, 1.0], [2, 2, 2]).unwrap();
        let piezo = [
            [0.3, -0.1, 0.2, 0.05, -0.15, 0.1],
            [-0.2, 0.25, -0.05, 0.1, 0.2, -0.1],
            [0.1, -0.05, 0.15, -0.2, 0.05, 0.25],
        ];
        let mut m = material(QField::UniformMatrix(nalgebra::Matrix3::new(
            1.0, 0.2, -0.1, 0.05, 0.9, 0.3, -0.2, 0.1, 1.1,
        )));
        m.piezo = PiezoTensor::from_entries(piezo);
        m.eps = 1.3;
        m.mu = 0.8;
        m.gain_a = 0.7;
        assemble(&g, &m).unwrap()
    }

    #[test]
    fn zero_rhs_gives_zero_solution() {
        let sys = generic_system();
        let (u, rep) = solve_resolvent(&sys, &FieldState::zero(sys.ndof)).unwrap();
        assert_eq!(u.to_flat().norm(), 0.0);
        assert_eq!(rep.iterations, 0);
    }

    #[test]
    fn manufactured_solution_round_trip() {
        let sys = generic_system();
        let u_star = FieldState::random_seeded(sys.ndof, 404);
        // rhs = (I - A) U*, built with tight mass solves
        let au = sys.apply_generator(&u_star).unwrap();
        let rhs = FieldState {
            u: &u_star.u - &au.u,
            v: &u_star.v - &au.v,
            e: &u_star.e - &au.e,
            h: &u_star.h - &au.h,
            time: 0.0,
        };
        let (sol, rep) = solve_resolvent(&sys, &rhs).unwrap();
        assert!(rep.residual <= RESOLVENT_TOL);
        let diff = sol.to_flat() - u_star.to_flat();
        let rel = diff.norm() / u_star.to_flat().norm();
        assert!(rel <= 1e-8, "recovered solution off by {rel}");
    }

    #[test]
    fn dissipativity_margin_is_tiny() {
        let sys = generic_system();
        let margin = dissipativity_check(&sys, 100);
        assert!(margin <= 1e-11, "margin {margin}");
    }

    #[test]
    fn interior_states_have_zero_pairing() {
        let sys = generic_system();
        let mut s = FieldState::random_seeded(sys.ndof, 7);
        s.e.fill(0.0);
        for node in 0..sys.grid.node_count() {
            if sys.grid.node_on_boundary(node) {
                for c in 0..3 {
                    s.v[3 * node + c] = 0.0;
                }
            }
        }
        let pairing = sys.generator_energy_pairing(&s);
        let norm2 = sys.energy_inner_product(&s, &s).unwrap();
        assert!(pairing.abs() <= 1e-12 * norm2, "pairing {pairing}");
    }

    #[test]
    fn coercivity_positive_and_q_independent() {
        let sys = generic_system();
        let c_generic = coercivity_estimate(&sys, 2000).unwrap();
        assert!(c_generic > 0.0);

        let g = build_grid([1.0, 1.0, 1.0], [2, 2, 2]).unwrap();
        let sys_q0 = assemble(&g, &material(QField::zero())).unwrap();
        let sys_qi = assemble(&g, &material(QField::IdentityScale(1.0))).unwrap();
        let c0 = coercivity_estimate(&sys_q0, 2000).unwrap();
        let ci = coercivity_estimate(&sys_qi, 2000).unwrap();
        assert!((c0 - ci).abs() <= 1e-10, "c_min depends on Q: {c0} vs {ci}");
    }

    #[test]
    fn cross_blocks_are_antisymmetric() {
        let sys = generic_system();
        assert!(cross_block_symmetry_defect(&sys) <= 1e-13);
    }

    #[test]
    fn coercivity_respects_dense_cap() {
        let sys = generic_system();
        assert!(matches!(coercivity_estimate(&sys, 10), Err(Error::TooLargeForDense { .. })));
    }
}
