//! Assembly and application of the semi-discrete generator.
//!
//! All four fields (u, v = du/dt, E, H) are discretized with trilinear nodal
//! vector elements. The weak form of the evolution reads, with the boundary
//! conditions substituted through the Green identity
//! `int curl a . b - int a . curl b = -int_G (a x nu) . b`:
//!
//! ```text
//!   M0   du/dt = M0 v
//!   M0   dv/dt = -K u - A BG u - BG v + P^T E - TQ E
//!   Meps dE/dt = Ccurl H - P v + TQ^T v - Btau E
//!   Mmu  dH/dt = -Ccurl^T E
//! ```
//!
//! Each coupling block (Ccurl, P, TQ) is assembled once and applied forward
//! or transposed, which makes the discrete dissipation identity
//! `(A U, U)_H = -(v^T BG v + E^T Btau E)` hold to rounding.

use nalgebra::{DMatrix, DVector, Vector3};
use rand::{Rng, SeedableRng};

use crate::element::{face_quad_points, volume_quad_points};
use crate::error::{Error, Result};
use crate::grid::BoxGrid;
use crate::linalg::{cg_jacobi, CsrMatrix, LinOp};
use crate::materials::{validate_material, MaterialSet, SQRT2};

/// Assembly refuses grids beyond this many total degrees of freedom.
pub const DEFAULT_ASSEMBLY_DOF_CAP: usize = 3_000_000;

/// Relative tolerance of the inner mass solves in `apply_generator`.
const MASS_SOLVE_TOL: f64 = 1e-14;
const MASS_SOLVE_MAX_ITERS: usize = 4000;

/// Nodal values of the four fields at one time instant.
#[derive(Debug, Clone, PartialEq)]
pub struct FieldState {
    pub u: DVector<f64>,
    pub v: DVector<f64>,
    pub e: DVector<f64>,
    pub h: DVector<f64>,
    pub time: f64,
}

impl FieldState {
    pub fn zero(ndof: usize) -> Self {
        FieldState {
            u: DVector::zeros(ndof),
            v: DVector::zeros(ndof),
            e: DVector::zeros(ndof),
            h: DVector::zeros(ndof),
            time: 0.0,
        }
    }

    pub fn ndof(&self) -> usize {
        self.u.len()
    }

    /// Uniform[-1, 1] entries from a seeded stream; reproducible.
    pub fn random_seeded(ndof: usize, seed: u64) -> Self {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let mut draw = || DVector::from_fn(ndof, |_, _| rng.gen_range(-1.0..1.0));
        let u = draw();
        let v = draw();
        let e = draw();
        let h = draw();
        FieldState { u, v, e, h, time: 0.0 }
    }

    /// Flat layout [u; v; E; H] used by the Krylov solvers.
    pub fn to_flat(&self) -> DVector<f64> {
        let n = self.ndof();
        let mut x = DVector::zeros(4 * n);
        x.rows_mut(0, n).copy_from(&self.u);
        x.rows_mut(n, n).copy_from(&self.v);
        x.rows_mut(2 * n, n).copy_from(&self.e);
        x.rows_mut(3 * n, n).copy_from(&self.h);
        x
    }

    pub fn from_flat(x: &DVector<f64>, time: f64) -> Self {
        let n = x.len() / 4;
        FieldState {
            u: x.rows(0, n).into_owned(),
            v: x.rows(n, n).into_owned(),
            e: x.rows(2 * n, n).into_owned(),
            h: x.rows(3 * n, n).into_owned(),
            time,
        }
    }
}

/// Residuals of the three transpose-pairing contracts, certified against an
/// independent assembly of each integration-by-parts partner.
#[derive(Debug, Clone, serde::Serialize)]
pub struct GreenIdentityReport {
    pub curl_pair: f64,
    pub piezo_pair: f64,
    pub q_pair: f64,
}

impl GreenIdentityReport {
    pub fn max(&self) -> f64 {
        self.curl_pair.max(self.piezo_pair).max(self.q_pair)
    }
}

/// Assembled operator blocks of the semi-discrete system.
#[derive(Debug, Clone)]
pub struct DiscreteSystem {
    pub grid: BoxGrid,
    pub material: MaterialSet,
    /// DOF count of one vector field block (3 x nodes).
    pub ndof: usize,
    /// Ellipticity constant of the validated material.
    pub alpha0: f64,

    /// Vector-field volume mass.
    pub m0: CsrMatrix,
    /// eps- and mu-weighted masses.
    pub meps: CsrMatrix,
    pub mmu: CsrMatrix,
    /// Elastic stiffness, int sigma(u) : gamma(u').
    pub k: CsrMatrix,
    /// Full boundary vector mass, int_G u . u'.
    pub bg: CsrMatrix,
    /// Boundary tangential mass, int_G u_tau . u'_tau.
    pub btau: CsrMatrix,
    /// Damping copies of BG and Btau entering the evolution equations; the
    /// conservative test variant zeroes these while keeping the A BG spring.
    pub bg_damp: CsrMatrix,
    pub btau_damp: CsrMatrix,
    /// Curl coupling, rows = E-test, cols = H: int H . curl(phi).
    pub ccurl: CsrMatrix,
    /// Piezo coupling, rows = E-test, cols = u/v: int e gamma(w) . phi.
    pub p: CsrMatrix,
    /// Boundary feedback, rows = v-test, cols = E: int_G Q (E x nu) . w.
    pub tq: CsrMatrix,
    /// Vector H1 stiffness, int grad u : grad u' (coercivity checks).
    pub kgrad: CsrMatrix,
    /// Unweighted curl-curl stiffness, int curl E . curl E'.
    pub kcurl1: CsrMatrix,

    mass_diag: DVector<f64>,
}

/// Mandel strain vector of the basis function N e_j given grad N.
fn strain_mandel(grad: [f64; 3], j: usize) -> [f64; 6] {
    let mut s = [0.0; 6];
    s[j] = grad[j];
    match j {
        0 => {
            s[4] = grad[2] / SQRT2;
            s[5] = grad[1] / SQRT2;
        }
        1 => {
            s[3] = grad[2] / SQRT2;
            s[5] = grad[0] / SQRT2;
        }
        _ => {
            s[3] = grad[1] / SQRT2;
            s[4] = grad[0] / SQRT2;
        }
    }
    s
}

fn cross_basis(grad: [f64; 3], i: usize) -> [f64; 3] {
    // grad N x e_i
    let g = Vector3::new(grad[0], grad[1], grad[2]);
    let e = Vector3::from_fn(|r, _| if r == i { 1.0 } else { 0.0 });
    let c = g.cross(&e);
    [c[0], c[1], c[2]]
}

pub fn assemble(grid: &BoxGrid, material: &MaterialSet) -> Result<DiscreteSystem> {
    assemble_capped(grid, material, DEFAULT_ASSEMBLY_DOF_CAP)
}

pub fn assemble_capped(
    grid: &BoxGrid,
    material: &MaterialSet,
    dof_cap: usize,
) -> Result<DiscreteSystem> {
    let report = validate_material(material)?;
    let nodes = grid.node_count();
    let ndof = 3 * nodes;
    if 4 * ndof > dof_cap {
        return Err(Error::TooManyDof { dof: 4 * ndof, cap: dof_cap });
    }

    let qpts = volume_quad_points(grid);
    let amat = material.elasticity.voigt;
    let emat = material.piezo.mandel_matrix();

    // Element matrices are identical for every cell of the uniform grid.
    let mut m0_e = DMatrix::zeros(24, 24);
    let mut k_e = DMatrix::zeros(24, 24);
    let mut kgrad_e = DMatrix::zeros(24, 24);
    let mut kcurl_e = DMatrix::zeros(24, 24);
    let mut ccurl_e = DMatrix::zeros(24, 24);
    let mut p_e = DMatrix::zeros(24, 24);
    for q in &qpts {
        for a in 0..8 {
            let ga = q.grad[a];
            for b in 0..8 {
                let gb = q.grad[b];
                let nanb = q.n[a] * q.n[b];
                let gagb: f64 = (0..3).map(|d| ga[d] * gb[d]).sum();
                for i in 0..3 {
                    let row = 3 * a + i;
                    let strain_a = strain_mandel(ga, i);
                    let curl_a = cross_basis(ga, i);
                    for j in 0..3 {
                        let col = 3 * b + j;
                        if i == j {
                            m0_e[(row, col)] += q.weight * nanb;
                            kgrad_e[(row, col)] += q.weight * gagb;
                            kcurl_e[(row, col)] += q.weight * gagb;
                        }
                        kcurl_e[(row, col)] -= q.weight * gb[i] * ga[j];
                        let strain_b = strain_mandel(gb, j);
                        let mut sas: f64 = 0.0;
                        for p in 0..6 {
                            let mut ap = 0.0;
                            for r in 0..6 {
                                ap += amat[(p, r)] * strain_b[r];
                            }
                            sas += strain_a[p] * ap;
                        }
                        k_e[(row, col)] += q.weight * sas;
                        // int H . curl(phi): rows E-test (a,i), cols H (b,j)
                        ccurl_e[(row, col)] += q.weight * q.n[b] * curl_a[j];
                        // int e gamma(w) . phi: rows E-test (a,i), cols u (b,j)
                        let mut egs = 0.0;
                        for r in 0..6 {
                            egs += emat[(i, r)] * strain_b[r];
                        }
                        p_e[(row, col)] += q.weight * q.n[a] * egs;
                    }
                }
            }
        }
    }

    let cell_count = grid.cell_count();
    let mut m0_t = Vec::with_capacity(cell_count * 576);
    let mut k_t = Vec::with_capacity(cell_count * 576);
    let mut kgrad_t = Vec::with_capacity(cell_count * 576);
    let mut kcurl_t = Vec::with_capacity(cell_count * 576);
    let mut ccurl_t = Vec::with_capacity(cell_count * 576);
    let mut p_t = Vec::with_capacity(cell_count * 576);
    for (i, j, k) in grid.cell_iter() {
        let nodes8 = grid.cell_nodes(i, j, k);
        for a in 0..8 {
            for ic in 0..3 {
                let row = 3 * nodes8[a] + ic;
                let er = 3 * a + ic;
                for b in 0..8 {
                    for jc in 0..3 {
                        let col = 3 * nodes8[b] + jc;
                        let ec = 3 * b + jc;
                        if m0_e[(er, ec)] != 0.0 {
                            m0_t.push((row, col, m0_e[(er, ec)]));
                        }
                        if k_e[(er, ec)] != 0.0 {
                            k_t.push((row, col, k_e[(er, ec)]));
                        }
                        if kgrad_e[(er, ec)] != 0.0 {
                            kgrad_t.push((row, col, kgrad_e[(er, ec)]));
                        }
                        if kcurl_e[(er, ec)] != 0.0 {
                            kcurl_t.push((row, col, kcurl_e[(er, ec)]));
                        }
                        if ccurl_e[(er, ec)] != 0.0 {
                            ccurl_t.push((row, col, ccurl_e[(er, ec)]));
                        }
                        if p_e[(er, ec)] != 0.0 {
                            p_t.push((row, col, p_e[(er, ec)]));
                        }
                    }
                }
            }
        }
    }

    // Boundary blocks, face by face; Q sampled at the face quadrature points.
    let faces = grid.boundary_faces();
    let mut bg_t = Vec::new();
    let mut btau_t = Vec::new();
    let mut tq_t = Vec::new();
    for face in &faces {
        let fq = face_quad_points(grid, face);
        let nu = face.normal;
        for (qi, (_, n, w)) in fq.iter().enumerate() {
            let qmat = material.q_field.matrix_at(face, qi);
            // Q (e_j x nu) for the three unit directions
            let mut q_cross = [Vector3::zeros(); 3];
            for j in 0..3 {
                let ej = Vector3::from_fn(|r, _| if r == j { 1.0 } else { 0.0 });
                q_cross[j] = qmat * ej.cross(&nu);
            }
            for a in 0..4 {
                for b in 0..4 {
                    let nanb = w * n[a] * n[b];
                    for i in 0..3 {
                        let row = 3 * face.nodes[a] + i;
                        for j in 0..3 {
                            let col = 3 * face.nodes[b] + j;
                            if i == j {
                                bg_t.push((row, col, nanb));
                            }
                            let tau = (if i == j { 1.0 } else { 0.0 }) - nu[i] * nu[j];
                            if tau != 0.0 {
                                btau_t.push((row, col, nanb * tau));
                            }
                            if q_cross[j][i] != 0.0 {
                                tq_t.push((row, col, nanb * q_cross[j][i]));
                            }
                        }
                    }
                }
            }
        }
    }

    let m0 = CsrMatrix::from_triplets(ndof, ndof, m0_t);
    let mass_diag = m0.diagonal();
    let bg = CsrMatrix::from_triplets(ndof, ndof, bg_t);
    let btau = CsrMatrix::from_triplets(ndof, ndof, btau_t);
    Ok(DiscreteSystem {
        grid: grid.clone(),
        material: material.clone(),
        ndof,
        alpha0: report.alpha0,
        meps: m0.scale(material.eps),
        mmu: m0.scale(material.mu),
        m0,
        k: CsrMatrix::from_triplets(ndof, ndof, k_t),
        bg_damp: bg.clone(),
        btau_damp: btau.clone(),
        bg,
        btau,
        ccurl: CsrMatrix::from_triplets(ndof, ndof, ccurl_t),
        p: CsrMatrix::from_triplets(ndof, ndof, p_t),
        tq: CsrMatrix::from_triplets(ndof, ndof, tq_t),
        kgrad: CsrMatrix::from_triplets(ndof, ndof, kgrad_t),
        kcurl1: CsrMatrix::from_triplets(ndof, ndof, kcurl_t),
        mass_diag,
    })
}

impl DiscreteSystem {
    fn check_dims(&self, s: &FieldState) -> Result<()> {
        if s.ndof() != self.ndof {
            return Err(Error::DimensionMismatch { expected: self.ndof, got: s.ndof() });
        }
        Ok(())
    }

    /// Mass-weighted generator action: the right-hand sides of the weak
    /// evolution equations, without any mass solve.
    pub fn weak_rhs(&self, s: &FieldState) -> (DVector<f64>, DVector<f64>, DVector<f64>) {
        let mut f_v = -self.k.mul_vec(&s.u);
        f_v.axpy(-self.material.gain_a, &self.bg.mul_vec(&s.u), 1.0);
        f_v -= self.bg_damp.mul_vec(&s.v);
        f_v += self.p.tr_mul_vec(&s.e);
        f_v -= self.tq.mul_vec(&s.e);

        let mut f_e = self.ccurl.mul_vec(&s.h);
        f_e -= self.p.mul_vec(&s.v);
        f_e += self.tq.tr_mul_vec(&s.v);
        f_e -= self.btau_damp.mul_vec(&s.e);

        let f_h = -self.ccurl.tr_mul_vec(&s.e);
        (f_v, f_e, f_h)
    }

    /// U' = A U through iterative mass solves. The returned state carries the
    /// same time stamp; its fields are the four time derivatives.
    pub fn apply_generator(&self, s: &FieldState) -> Result<FieldState> {
        self.check_dims(s)?;
        let (f_v, f_e, f_h) = self.weak_rhs(s);
        let mut vdot = DVector::zeros(self.ndof);
        let mut edot = DVector::zeros(self.ndof);
        let mut hdot = DVector::zeros(self.ndof);
        cg_jacobi(&self.m0, &self.mass_diag, &f_v, &mut vdot, MASS_SOLVE_TOL, MASS_SOLVE_MAX_ITERS)?;
        cg_jacobi(&self.m0, &self.mass_diag, &f_e, &mut edot, MASS_SOLVE_TOL, MASS_SOLVE_MAX_ITERS)?;
        edot /= self.material.eps;
        cg_jacobi(&self.m0, &self.mass_diag, &f_h, &mut hdot, MASS_SOLVE_TOL, MASS_SOLVE_MAX_ITERS)?;
        hdot /= self.material.mu;
        Ok(FieldState { u: s.v.clone(), v: vdot, e: edot, h: hdot, time: s.time })
    }

    /// `(A U, U)_H`, evaluated through the weak right-hand sides so no mass
    /// solve error enters: `v'^T M0 v = f_v . v` etc.
    pub fn generator_energy_pairing(&self, s: &FieldState) -> f64 {
        let (f_v, f_e, f_h) = self.weak_rhs(s);
        let u_part = self.k.quadratic_form(&s.v, &s.u)
            + self.material.gain_a * self.bg.quadratic_form(&s.v, &s.u);
        u_part + f_v.dot(&s.v) + f_e.dot(&s.e) + f_h.dot(&s.h)
    }

    /// The energy inner product
    /// `(U, U')_H = u^T (K + A BG) u' + v^T M0 v' + E^T Meps E' + H^T Mmu H'`.
    pub fn energy_inner_product(&self, s1: &FieldState, s2: &FieldState) -> Result<f64> {
        self.check_dims(s1)?;
        self.check_dims(s2)?;
        Ok(self.k.quadratic_form(&s1.u, &s2.u)
            + self.material.gain_a * self.bg.quadratic_form(&s1.u, &s2.u)
            + self.m0.quadratic_form(&s1.v, &s2.v)
            + self.meps.quadratic_form(&s1.e, &s2.e)
            + self.mmu.quadratic_form(&s1.h, &s2.h))
    }

    /// Conservative variant for structure tests: piezo, Q and the damping
    /// boundary terms removed; the A BG spring (part of the energy) is kept,
    /// leaving only the skew elastic/curl exchange.
    pub fn conservative_variant(&self) -> DiscreteSystem {
        let empty = || CsrMatrix::from_triplets(self.ndof, self.ndof, Vec::new());
        let mut out = self.clone();
        out.p = empty();
        out.tq = empty();
        out.bg_damp = empty();
        out.btau_damp = empty();
        out
    }

    /// Fault-injection hook: perturbs the stored curl block so that the
    /// pairing certification must fail. Test use only.
    pub fn corrupt_curl_block_for_tests(&mut self) {
        let mut triplets: Vec<(usize, usize, f64)> = self.ccurl.triplet_iter().collect();
        if let Some(first) = triplets.first_mut() {
            first.2 += 1e-3;
        }
        self.ccurl = CsrMatrix::from_triplets(self.ndof, self.ndof, triplets);
    }

    /// Re-assembles each integration-by-parts partner independently and
    /// reports the worst entry disagreement with the stored block transpose.
    pub fn green_identity_residuals(&self) -> GreenIdentityReport {
        let grid = &self.grid;
        let qpts = volume_quad_points(grid);
        let emat = self.material.piezo.mandel_matrix();

        // (i) int curl E . psi, rows H-test (b,j), cols E (a,i), via the
        // Levi-Civita contraction of accumulated first-moment integrals.
        let mut g_elem = [[[0.0f64; 3]; 8]; 8]; // g[a][b][m] = int N_b dN_a/dx_m
        for q in &qpts {
            for a in 0..8 {
                for b in 0..8 {
                    for m in 0..3 {
                        g_elem[a][b][m] += q.weight * q.n[b] * q.grad[a][m];
                    }
                }
            }
        }
        let eps3 = |i: usize, j: usize, k: usize| -> f64 {
            match (i, j, k) {
                (0, 1, 2) | (1, 2, 0) | (2, 0, 1) => 1.0,
                (0, 2, 1) | (2, 1, 0) | (1, 0, 2) => -1.0,
                _ => 0.0,
            }
        };
        let mut curl_partner = Vec::new();
        for (i, j, k) in grid.cell_iter() {
            let nodes8 = grid.cell_nodes(i, j, k);
            for a in 0..8 {
                for ic in 0..3 {
                    for b in 0..8 {
                        for jc in 0..3 {
                            // (grad N_a x e_ic)_jc = eps(jc, m, ic) dN_a/dx_m
                            let mut val = 0.0;
                            for m in 0..3 {
                                val += eps3(jc, m, ic) * g_elem[a][b][m];
                            }
                            if val != 0.0 {
                                curl_partner.push((3 * nodes8[b] + jc, 3 * nodes8[a] + ic, val));
                            }
                        }
                    }
                }
            }
        }
        let curl_pair = max_diff_vs_transpose(&self.ccurl, curl_partner, self.ndof);

        // (ii) int E . e gamma(w), rows v-test (b,j), cols E (a,i), through
        // the adjoint route (e^T E) : gamma(w).
        let mut piezo_partner = Vec::new();
        for (i, j, k) in grid.cell_iter() {
            let nodes8 = grid.cell_nodes(i, j, k);
            for q in &qpts {
                for a in 0..8 {
                    for ic in 0..3 {
                        // e^T e_ic in Mandel components is row ic of emat
                        for b in 0..8 {
                            let sb = q.grad[b];
                            for jc in 0..3 {
                                let strain_b = strain_mandel(sb, jc);
                                let mut dot = 0.0;
                                for r in 0..6 {
                                    dot += emat[(ic, r)] * strain_b[r];
                                }
                                let val = q.weight * q.n[a] * dot;
                                if val != 0.0 {
                                    piezo_partner.push((
                                        3 * nodes8[b] + jc,
                                        3 * nodes8[a] + ic,
                                        val,
                                    ));
                                }
                            }
                        }
                    }
                }
            }
        }
        let piezo_pair = max_diff_vs_transpose(&self.p, piezo_partner, self.ndof);

        // (iii) -int_G ((Q^T v) x nu) . phi, rows E-test (a,i), cols v (b,j).
        let mut q_partner = Vec::new();
        for face in grid.boundary_faces() {
            let fq = face_quad_points(grid, &face);
            let nu = face.normal;
            for (qi, (_, n, w)) in fq.iter().enumerate() {
                let qt = self.material.q_field.matrix_at(&face, qi).transpose();
                for b in 0..4 {
                    for jc in 0..3 {
                        let ej = Vector3::from_fn(|r, _| if r == jc { 1.0 } else { 0.0 });
                        let qv_cross = (qt * ej).cross(&nu);
                        for a in 0..4 {
                            for ic in 0..3 {
                                let val = -w * n[a] * n[b] * qv_cross[ic];
                                if val != 0.0 {
                                    q_partner.push((
                                        3 * face.nodes[a] + ic,
                                        3 * face.nodes[b] + jc,
                                        val,
                                    ));
                                }
                            }
                        }
                    }
                }
            }
        }
        let q_pair = max_diff_vs_transpose(&self.tq, q_partner, self.ndof);

        GreenIdentityReport { curl_pair, piezo_pair, q_pair }
    }

    pub fn mass_diag(&self) -> &DVector<f64> {
        &self.mass_diag
    }

    /// y = M x on the flat [u; v; E; H] layout.
    pub fn mass_apply_flat(&self, x: &DVector<f64>, y: &mut DVector<f64>) {
        let n = self.ndof;
        let s = FieldState::from_flat(x, 0.0);
        y.rows_mut(0, n).copy_from(&self.m0.mul_vec(&s.u));
        y.rows_mut(n, n).copy_from(&self.m0.mul_vec(&s.v));
        y.rows_mut(2 * n, n).copy_from(&self.meps.mul_vec(&s.e));
        y.rows_mut(3 * n, n).copy_from(&self.mmu.mul_vec(&s.h));
    }

    /// y = Atilde x (mass-weighted generator) on the flat layout.
    pub fn atilde_apply_flat(&self, x: &DVector<f64>, y: &mut DVector<f64>) {
        let n = self.ndof;
        let s = FieldState::from_flat(x, 0.0);
        let (f_v, f_e, f_h) = self.weak_rhs(&s);
        y.rows_mut(0, n).copy_from(&self.m0.mul_vec(&s.v));
        y.rows_mut(n, n).copy_from(&f_v);
        y.rows_mut(2 * n, n).copy_from(&f_e);
        y.rows_mut(3 * n, n).copy_from(&f_h);
    }

    /// Approximate block-mass preconditioner (inner CG at loose tolerance).
    pub fn mass_precondition_flat(&self, r: &DVector<f64>) -> DVector<f64> {
        let n = self.ndof;
        let mut z = DVector::zeros(4 * n);
        for block in 0..4 {
            let rhs = r.rows(block * n, n).into_owned();
            let mut x = DVector::zeros(n);
            // loose inner solve; the flexible outer iteration absorbs it
            let _ = cg_jacobi(&self.m0, &self.mass_diag, &rhs, &mut x, 0.05, 40);
            let scale = match block {
                2 => 1.0 / self.material.eps,
                3 => 1.0 / self.material.mu,
                _ => 1.0,
            };
            z.rows_mut(block * n, n).copy_from(&(x * scale));
        }
        z
    }

    /// Dense materialization of (Atilde, M) for the desk-scale eigenproblems.
    pub fn dense_generator_pair(&self) -> (DMatrix<f64>, DMatrix<f64>) {
        let n = self.ndof;
        let m0 = self.m0.to_dense();
        let meps = self.meps.to_dense();
        let mmu = self.mmu.to_dense();
        let k = self.k.to_dense();
        let bg = self.bg.to_dense();
        let ccurl = self.ccurl.to_dense();
        let p = self.p.to_dense();
        let tq = self.tq.to_dense();
        let a = self.material.gain_a;

        let mut atilde = DMatrix::zeros(4 * n, 4 * n);
        atilde.view_mut((0, n), (n, n)).copy_from(&m0);
        atilde.view_mut((n, 0), (n, n)).copy_from(&(-&k - a * &bg));
        atilde.view_mut((n, n), (n, n)).copy_from(&(-self.bg_damp.to_dense()));
        atilde.view_mut((n, 2 * n), (n, n)).copy_from(&(p.transpose() - &tq));
        atilde.view_mut((2 * n, n), (n, n)).copy_from(&(tq.transpose() - &p));
        atilde.view_mut((2 * n, 2 * n), (n, n)).copy_from(&(-self.btau_damp.to_dense()));
        atilde.view_mut((2 * n, 3 * n), (n, n)).copy_from(&ccurl);
        atilde.view_mut((3 * n, 2 * n), (n, n)).copy_from(&(-ccurl.transpose()));

        let mut mass = DMatrix::zeros(4 * n, 4 * n);
        mass.view_mut((0, 0), (n, n)).copy_from(&m0);
        mass.view_mut((n, n), (n, n)).copy_from(&m0);
        mass.view_mut((2 * n, 2 * n), (n, n)).copy_from(&meps);
        mass.view_mut((3 * n, 3 * n), (n, n)).copy_from(&mmu);
        (atilde, mass)
    }

    /// Dense energy Gram matrix blockdiag(K + A BG, M0, Meps, Mmu); positive
    /// definite, and the generator is dissipative in this inner product.
    pub fn dense_energy_gram(&self) -> DMatrix<f64> {
        let n = self.ndof;
        let mut gram = DMatrix::zeros(4 * n, 4 * n);
        gram.view_mut((0, 0), (n, n))
            .copy_from(&(self.k.to_dense() + self.material.gain_a * self.bg.to_dense()));
        gram.view_mut((n, n), (n, n)).copy_from(&self.m0.to_dense());
        gram.view_mut((2 * n, 2 * n), (n, n)).copy_from(&self.meps.to_dense());
        gram.view_mut((3 * n, 3 * n), (n, n)).copy_from(&self.mmu.to_dense());
        gram
    }

    /// Named block lookup for the triplet export interface.
    pub fn block(&self, name: &str) -> Option<&CsrMatrix> {
        Some(match name {
            "M0" => &self.m0,
            "Meps" => &self.meps,
            "Mmu" => &self.mmu,
            "K" => &self.k,
            "BG" => &self.bg,
            "Btau" => &self.btau,
            "Ccurl" => &self.ccurl,
            "P" => &self.p,
            "TQ" => &self.tq,
            "Kgrad" => &self.kgrad,
            "Kcurl" => &self.kcurl1,
            _ => return None,
        })
    }
}

/// Shifted mass-generator operator `x -> M x - shift * Atilde x` on the flat
/// layout; the midpoint step and the resolvent solve are both instances.
pub struct ShiftedGeneratorOp<'a> {
    pub sys: &'a DiscreteSystem,
    pub shift: f64,
}

impl LinOp for ShiftedGeneratorOp<'_> {
    fn dim(&self) -> usize {
        4 * self.sys.ndof
    }

    fn apply(&self, x: &DVector<f64>, y: &mut DVector<f64>) {
        let mut at = DVector::zeros(4 * self.sys.ndof);
        self.sys.mass_apply_flat(x, y);
        self.sys.atilde_apply_flat(x, &mut at);
        y.axpy(-self.shift, &at, 1.0);
    }
}

fn max_diff_vs_transpose(stored: &CsrMatrix, partner: Vec<(usize, usize, f64)>, n: usize) -> f64 {
    let mut combined = partner;
    combined.extend(stored.triplet_iter().map(|(r, c, v)| (c, r, -v)));
    let diff = CsrMatrix::from_triplets(n, n, combined);
    diff.triplet_iter().map(|(_, _, v)| v.abs()).fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::build_grid;
    use crate::materials::{ElasticityTensor, PiezoTensor, QField};
    use approx::assert_relative_eq;

    fn isotropic_material() -> MaterialSet {
        MaterialSet {
            elasticity: ElasticityTensor::isotropic(1.0, 1.0),
            piezo: PiezoTensor::zero(),
            eps: 1.0,
            mu: 1.0,
            gain_a: 1.0,
            q_field: QField::IdentityScale(1.0),
        }
    }

    fn generic_material() -> MaterialSet {
        let upper = [
            3.0, 0.2, -0.1, 0.05, 0.1, -0.15, //
            2.8, 0.15, -0.05, 0.2, 0.1, //
            3.2, 0.1, -0.2, 0.05, //
            2.5, 0.05, -0.1, //
            2.7, 0.15, //
            2.9,
        ];
        let piezo = [
            [0.3, -0.1, 0.2, 0.05, -0.15, 0.1],
            [-0.2, 0.25, -0.05, 0.1, 0.2, -0.1],
            [0.1, -0.05, 0.15, -0.2, 0.05, 0.25],
        ];
        MaterialSet {
            elasticity: ElasticityTensor::from_upper_triangle(&upper),
            piezo: PiezoTensor::from_entries(piezo),
            eps: 1.3,
            mu: 0.8,
            gain_a: 0.7,
            q_field: QField::UniformMatrix(nalgebra::Matrix3::new(
                1.0, 0.2, -0.1, //
                0.05, 0.9, 0.3, //
                -0.2, 0.1, 1.1,
            )),
        }
    }

    #[test]
    fn block_dimensions_on_2x2x2() {
        let g = build_grid([1.0, 1.0, 1.0], [2, 2, 2]).unwrap();
        let sys = assemble(&g, &isotropic_material()).unwrap();
        assert_eq!(sys.ndof, 81);
        for name in ["M0", "Meps", "Mmu", "K", "BG", "Btau", "Ccurl", "P", "TQ"] {
            let b = sys.block(name).unwrap();
            assert_eq!((b.nrows(), b.ncols()), (81, 81), "block {name}");
        }
    }

    #[test]
    fn zero_piezo_gives_zero_coupling_block() {
        let g = build_grid([1.0, 1.0, 1.0], [2, 2, 2]).unwrap();
        let sys = assemble(&g, &isotropic_material()).unwrap();
        assert_eq!(sys.p.nnz(), 0);
    }

    #[test]
    fn mass_and_stiffness_blocks_are_symmetric_spd() {
        let g = build_grid([1.0, 1.0, 1.0], [2, 2, 2]).unwrap();
        let sys = assemble(&g, &generic_material()).unwrap();
        for name in ["M0", "Meps", "Mmu", "K", "BG", "Btau", "Kgrad", "Kcurl"] {
            let b = sys.block(name).unwrap();
            assert!(b.symmetry_defect() < 1e-13, "{name} not symmetric");
        }
        // strict positive definiteness of the masses
        for name in ["M0", "Meps", "Mmu"] {
            let dense = sys.block(name).unwrap().to_dense();
            assert!(dense.cholesky().is_some(), "{name} not SPD");
        }
        // K + A BG is positive definite (the (u,u)_1 norm)
        let k_abg = sys.k.to_dense() + sys.material.gain_a * sys.bg.to_dense();
        assert!(k_abg.cholesky().is_some());
    }

    #[test]
    fn zero_state_has_zero_derivative() {
        let g = build_grid([1.0, 1.0, 1.0], [2, 2, 2]).unwrap();
        let sys = assemble(&g, &generic_material()).unwrap();
        let out = sys.apply_generator(&FieldState::zero(sys.ndof)).unwrap();
        assert_eq!(out.u.norm(), 0.0);
        assert_eq!(out.v.norm(), 0.0);
        assert_eq!(out.e.norm(), 0.0);
        assert_eq!(out.h.norm(), 0.0);
    }

    #[test]
    fn constant_displacement_feels_only_the_boundary_spring() {
        let g = build_grid([1.0, 1.0, 1.0], [2, 2, 2]).unwrap();
        let sys = assemble(&g, &isotropic_material()).unwrap();
        let mut s = FieldState::zero(sys.ndof);
        let c = Vector3::new(0.4, -0.3, 0.9);
        for node in 0..g.node_count() {
            for comp in 0..3 {
                s.u[3 * node + comp] = c[comp];
            }
        }
        let (f_v, f_e, f_h) = sys.weak_rhs(&s);
        // rigid translation: K u = 0 exactly, so M0 vdot = -A BG u
        let expected = -sys.material.gain_a * sys.bg.mul_vec(&s.u);
        assert!((f_v.clone() - expected).norm() < 1e-13 * (1.0 + f_v.norm()));
        assert_eq!(f_e.norm(), 0.0);
        assert_eq!(f_h.norm(), 0.0);
    }

    #[test]
    fn dissipativity_identity_on_random_states() {
        let g = build_grid([1.0, 1.0, 1.0], [2, 2, 2]).unwrap();
        let sys = assemble(&g, &generic_material()).unwrap();
        for seed in 0..20 {
            let s = FieldState::random_seeded(sys.ndof, seed);
            let pairing = sys.generator_energy_pairing(&s);
            let flux = sys.bg.quadratic_form(&s.v, &s.v) + sys.btau.quadratic_form(&s.e, &s.e);
            let norm2 = sys.energy_inner_product(&s, &s).unwrap();
            assert!(
                (pairing + flux).abs() <= 1e-12 * norm2.max(1.0),
                "defect {} vs norm {}",
                (pairing + flux).abs(),
                norm2
            );
        }
    }

    #[test]
    fn apply_generator_matches_weak_pairing() {
        let g = build_grid([1.0, 1.0, 1.0], [2, 2, 2]).unwrap();
        let sys = assemble(&g, &generic_material()).unwrap();
        let s = FieldState::random_seeded(sys.ndof, 3);
        let ds = sys.apply_generator(&s).unwrap();
        let via_solves = sys.energy_inner_product(&ds, &s).unwrap();
        let exact = sys.generator_energy_pairing(&s);
        assert_relative_eq!(via_solves, exact, max_relative = 1e-11);
    }

    #[test]
    fn conservative_variant_is_skew() {
        let g = build_grid([1.0, 1.0, 1.0], [2, 2, 2]).unwrap();
        let sys = assemble(&g, &generic_material()).unwrap().conservative_variant();
        for seed in 0..10 {
            let s = FieldState::random_seeded(sys.ndof, seed);
            let pairing = sys.generator_energy_pairing(&s);
            let norm2 = sys.energy_inner_product(&s, &s).unwrap();
            assert!(pairing.abs() <= 1e-12 * norm2, "pairing {pairing}");
        }
    }

    #[test]
    fn green_identities_hold_and_catch_corruption() {
        let g = build_grid([1.0, 1.0, 1.0], [2, 2, 2]).unwrap();
        let mut sys = assemble(&g, &generic_material()).unwrap();
        let report = sys.green_identity_residuals();
        assert!(report.curl_pair <= 1e-13, "curl {}", report.curl_pair);
        assert!(report.piezo_pair <= 1e-13, "piezo {}", report.piezo_pair);
        assert!(report.q_pair <= 1e-13, "q {}", report.q_pair);

        sys.corrupt_curl_block_for_tests();
        let corrupted = sys.green_identity_residuals();
        assert!(corrupted.curl_pair > 1e-4);
    }

    #[test]
    fn green_identities_trivial_when_blocks_vanish() {
        let g = build_grid([1.0, 1.0, 1.0], [2, 2, 2]).unwrap();
        let mut m = generic_material();
        m.piezo = PiezoTensor::zero();
        m.q_field = QField::zero();
        let sys = assemble(&g, &m).unwrap();
        let report = sys.green_identity_residuals();
        assert_eq!(report.piezo_pair, 0.0);
        assert_eq!(report.q_pair, 0.0);
    }

    #[test]
    fn q_normal_shift_leaves_boundary_block_identical() {
        let g = build_grid([1.0, 1.0, 1.0], [2, 2, 2]).unwrap();
        let mut m = generic_material();
        let sys = assemble(&g, &m).unwrap();
        m.q_field = m.q_field.with_normal_shift(2.5);
        let sys_shifted = assemble(&g, &m).unwrap();
        let d = sys.tq.to_dense() - sys_shifted.tq.to_dense();
        assert!(d.norm() <= 1e-13, "TQ changed by {}", d.norm());
    }

    #[test]
    fn energy_inner_product_block_orthogonality() {
        let g = build_grid([1.0, 1.0, 1.0], [2, 2, 2]).unwrap();
        let sys = assemble(&g, &generic_material()).unwrap();
        let zero = FieldState::zero(sys.ndof);
        assert_eq!(sys.energy_inner_product(&zero, &zero).unwrap(), 0.0);

        let mut s1 = FieldState::zero(sys.ndof);
        let mut s2 = FieldState::zero(sys.ndof);
        s1.u = FieldState::random_seeded(sys.ndof, 1).u;
        s2.v = FieldState::random_seeded(sys.ndof, 2).v;
        assert_eq!(sys.energy_inner_product(&s1, &s2).unwrap(), 0.0);

        let bad = FieldState::zero(12);
        assert!(matches!(
            sys.energy_inner_product(&bad, &zero),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn dof_cap_is_enforced() {
        let g = build_grid([1.0, 1.0, 1.0], [4, 4, 4]).unwrap();
        assert!(matches!(
            assemble_capped(&g, &isotropic_material(), 100),
            Err(Error::TooManyDof { .. })
        ));
    }
}
