//! Constitutive tensors and pointwise constitutive laws.
//!
//! Symmetric 3x3 tensors are packed in the tensor-norm (Mandel) Voigt
//! convention: components (11, 22, 33, 23, 13, 12) with the shear slots
//! scaled by sqrt(2). Under this packing the packed dot product equals the
//! full double contraction, so the smallest eigenvalue of the packed 6x6
//! elasticity matrix is exactly the ellipticity constant alpha_0.

use nalgebra::{DMatrix, Matrix3, Matrix6, Vector3, Vector6};

use crate::error::{Error, Result};
use crate::grid::{BoundaryFace, BoxGrid};

pub const SQRT2: f64 = std::f64::consts::SQRT_2;

/// Symmetric 3x3 tensor stored as its six independent components
/// (xx, yy, zz, yz, xz, xy), unscaled.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct SymTensor3 {
    pub comps: [f64; 6],
}

impl SymTensor3 {
    pub fn zero() -> Self {
        Self::default()
    }

    pub fn from_components(xx: f64, yy: f64, zz: f64, yz: f64, xz: f64, xy: f64) -> Self {
        SymTensor3 { comps: [xx, yy, zz, yz, xz, xy] }
    }

    pub fn from_matrix(m: &Matrix3<f64>) -> Self {
        debug_assert!((m - m.transpose()).norm() < 1e-12 * (1.0 + m.norm()));
        SymTensor3 {
            comps: [m[(0, 0)], m[(1, 1)], m[(2, 2)], m[(1, 2)], m[(0, 2)], m[(0, 1)]],
        }
    }

    pub fn to_matrix(&self) -> Matrix3<f64> {
        let [xx, yy, zz, yz, xz, xy] = self.comps;
        Matrix3::new(xx, xy, xz, xy, yy, yz, xz, yz, zz)
    }

    /// Tensor-norm Voigt (Mandel) packing: shear slots carry sqrt(2).
    pub fn to_mandel(&self) -> Vector6<f64> {
        let [xx, yy, zz, yz, xz, xy] = self.comps;
        Vector6::new(xx, yy, zz, SQRT2 * yz, SQRT2 * xz, SQRT2 * xy)
    }

    pub fn from_mandel(v: &Vector6<f64>) -> Self {
        SymTensor3 {
            comps: [v[0], v[1], v[2], v[3] / SQRT2, v[4] / SQRT2, v[5] / SQRT2],
        }
    }

    /// Full double contraction `self : other`.
    pub fn ddot(&self, other: &SymTensor3) -> f64 {
        self.to_mandel().dot(&other.to_mandel())
    }
}

/// Fourth-order elasticity tensor in tensor-norm Voigt form.
#[derive(Debug, Clone, PartialEq)]
pub struct ElasticityTensor {
    /// 6x6 symmetric matrix; quadratic form equals a_{ijkl} g_ij g_kl.
    pub voigt: Matrix6<f64>,
}

impl ElasticityTensor {
    /// Isotropic tensor from the Lame parameters: sigma = lambda tr(g) I + 2 mu g.
    pub fn isotropic(lambda: f64, mu_shear: f64) -> Self {
        let mut m = Matrix6::zeros();
        for i in 0..3 {
            for j in 0..3 {
                m[(i, j)] = lambda;
            }
            m[(i, i)] += 2.0 * mu_shear;
            m[(i + 3, i + 3)] = 2.0 * mu_shear;
        }
        ElasticityTensor { voigt: m }
    }

    /// General anisotropic tensor from the 21 upper-triangle entries of the
    /// tensor-norm Voigt matrix, row-major.
    pub fn from_upper_triangle(upper: &[f64; 21]) -> Self {
        let mut m = Matrix6::zeros();
        let mut k = 0;
        for i in 0..6 {
            for j in i..6 {
                m[(i, j)] = upper[k];
                m[(j, i)] = upper[k];
                k += 1;
            }
        }
        ElasticityTensor { voigt: m }
    }

    pub fn zero() -> Self {
        ElasticityTensor { voigt: Matrix6::zeros() }
    }

    /// Reconstructs the full a_{ijkl} tensor from the packed form.
    pub fn full_tensor(&self) -> [[[[f64; 3]; 3]; 3]; 3] {
        // Mandel scaling: normal/normal 1, normal/shear 1/sqrt2, shear/shear 1/2.
        const PAIRS: [(usize, usize); 6] = [(0, 0), (1, 1), (2, 2), (1, 2), (0, 2), (0, 1)];
        let w = |p: usize| if p < 3 { 1.0 } else { SQRT2 };
        let mut a = [[[[0.0; 3]; 3]; 3]; 3];
        for p in 0..6 {
            for q in 0..6 {
                let v = self.voigt[(p, q)] / (w(p) * w(q));
                let (i, j) = PAIRS[p];
                let (k, l) = PAIRS[q];
                for (ii, jj) in [(i, j), (j, i)] {
                    for (kk, ll) in [(k, l), (l, k)] {
                        a[ii][jj][kk][ll] = v;
                    }
                }
            }
        }
        a
    }
}

/// Third-order piezoelectric tensor e_{kij} = e_{kji}, stored as a 3x6 raw
/// Voigt matrix over the pairs (11, 22, 33, 23, 13, 12), unscaled.
#[derive(Debug, Clone, PartialEq)]
pub struct PiezoTensor {
    pub entries: [[f64; 6]; 3],
}

impl PiezoTensor {
    pub fn zero() -> Self {
        PiezoTensor { entries: [[0.0; 6]; 3] }
    }

    pub fn from_entries(entries: [[f64; 6]; 3]) -> Self {
        PiezoTensor { entries }
    }

    pub fn is_zero(&self) -> bool {
        self.entries.iter().flatten().all(|&v| v == 0.0)
    }

    /// The 3x6 matrix acting on Mandel-packed strains: (e g)_k = mandel_k . g_mandel.
    pub fn mandel_matrix(&self) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(3, 6);
        for k in 0..3 {
            for p in 0..6 {
                let w = if p < 3 { 1.0 } else { SQRT2 };
                m[(k, p)] = w * self.entries[k][p];
            }
        }
        m
    }

    /// e applied to a strain: (e g)_k = e_{kij} g_ij.
    pub fn apply(&self, strain: &SymTensor3) -> Vector3<f64> {
        let m = self.mandel_matrix();
        let g = strain.to_mandel();
        let mut out = Vector3::zeros();
        for k in 0..3 {
            out[k] = (0..6).map(|p| m[(k, p)] * g[p]).sum();
        }
        out
    }

    /// Adjoint map: (e^T f)_{ij} = e_{kij} f_k.
    pub fn apply_adjoint(&self, f: &Vector3<f64>) -> SymTensor3 {
        let m = self.mandel_matrix();
        let mut packed = Vector6::zeros();
        for p in 0..6 {
            packed[p] = (0..3).map(|k| m[(k, p)] * f[k]).sum();
        }
        SymTensor3::from_mandel(&packed)
    }
}

/// Boundary matrix field Q.
#[derive(Debug, Clone)]
pub enum QField {
    /// Q = scale * I uniformly on the boundary.
    IdentityScale(f64),
    /// One constant 3x3 matrix on the whole boundary.
    UniformMatrix(Matrix3<f64>),
    /// Q = alpha(x) I with alpha sampled per boundary face at the four face
    /// quadrature points, plus nodal samples over the closed box for c_alpha.
    ScalarSamples {
        face_qpoint_values: Vec<[f64; 4]>,
        node_values: Vec<f64>,
    },
    /// One 3x3 matrix per boundary face.
    MatrixPerFace(Vec<Matrix3<f64>>),
    /// Base field shifted by rho * nu nu^T; by the tangential structure of the
    /// boundary conditions this must act identically to the base field.
    NormalShifted { base: Box<QField>, rho: f64 },
}

impl QField {
    pub fn zero() -> Self {
        QField::IdentityScale(0.0)
    }

    /// Q = alpha(x) I from a scalar function, sampled at the face quadrature
    /// points and at every grid node.
    pub fn scalar_from_fn(grid: &BoxGrid, faces: &[BoundaryFace], f: impl Fn(Vector3<f64>) -> f64) -> Self {
        let face_qpoint_values = faces
            .iter()
            .map(|face| {
                let pts = crate::element::face_quad_points(grid, face);
                [f(pts[0].0), f(pts[1].0), f(pts[2].0), f(pts[3].0)]
            })
            .collect();
        let node_values = (0..grid.node_count()).map(|n| f(grid.node_coords(n))).collect();
        QField::ScalarSamples { face_qpoint_values, node_values }
    }

    pub fn with_normal_shift(self, rho: f64) -> Self {
        QField::NormalShifted { base: Box::new(self), rho }
    }

    /// The matrix at quadrature point `qp` of face `face`.
    pub fn matrix_at(&self, face: &BoundaryFace, qp: usize) -> Matrix3<f64> {
        match self {
            QField::IdentityScale(s) => Matrix3::identity() * *s,
            QField::UniformMatrix(m) => *m,
            QField::ScalarSamples { face_qpoint_values, .. } => {
                Matrix3::identity() * face_qpoint_values[face.id][qp]
            }
            QField::MatrixPerFace(ms) => ms[face.id],
            QField::NormalShifted { base, rho } => {
                base.matrix_at(face, qp) + *rho * face.normal * face.normal.transpose()
            }
        }
    }

    /// Nodal samples of alpha for scalar fields; `None` for matrix fields.
    pub fn alpha_node_values(&self, grid: &BoxGrid) -> Option<Vec<f64>> {
        match self {
            QField::IdentityScale(s) => Some(vec![*s; grid.node_count()]),
            QField::ScalarSamples { node_values, .. } => Some(node_values.clone()),
            QField::NormalShifted { base, .. } => base.alpha_node_values(grid),
            _ => None,
        }
    }

    /// Whether the field has the Q = alpha I form required by the decay theorem.
    pub fn is_scalar(&self) -> bool {
        match self {
            QField::IdentityScale(_) | QField::ScalarSamples { .. } => true,
            QField::NormalShifted { base, .. } => base.is_scalar(),
            _ => false,
        }
    }
}

/// Full material description of the coupled system.
#[derive(Debug, Clone)]
pub struct MaterialSet {
    pub elasticity: ElasticityTensor,
    pub piezo: PiezoTensor,
    /// Electric permittivity.
    pub eps: f64,
    /// Magnetic permeability.
    pub mu: f64,
    /// Boundary spring stiffness A.
    pub gain_a: f64,
    pub q_field: QField,
}

#[derive(Debug, Clone, serde::Serialize)]
pub struct ValidationReport {
    /// Smallest eigenvalue of the packed elasticity matrix (the ellipticity
    /// constant).
    pub alpha0: f64,
    /// Largest eigenvalue, used for wave-speed estimates.
    pub alpha_max: f64,
}

/// Validates positivity of the coefficients and ellipticity of the elasticity
/// tensor; returns alpha_0 (and the top eigenvalue) on success.
pub fn validate_material(m: &MaterialSet) -> Result<ValidationReport> {
    if !(m.eps > 0.0) {
        return Err(Error::NonPositiveCoefficient(format!("eps = {}", m.eps)));
    }
    if !(m.mu > 0.0) {
        return Err(Error::NonPositiveCoefficient(format!("mu = {}", m.mu)));
    }
    if !(m.gain_a > 0.0) {
        return Err(Error::NonPositiveCoefficient(format!("gainA = {}", m.gain_a)));
    }
    let sym = (m.elasticity.voigt + m.elasticity.voigt.transpose()) * 0.5;
    let eig = sym.symmetric_eigen();
    let alpha0 = eig.eigenvalues.iter().copied().fold(f64::INFINITY, f64::min);
    let alpha_max = eig.eigenvalues.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if alpha0 <= 0.0 {
        return Err(Error::NonEllipticTensor { alpha0 });
    }
    Ok(ValidationReport { alpha0, alpha_max })
}

/// sigma(u, E) = a : gamma(u) - e^T E. With `efield = 0` this is the purely
/// elastic stress.
pub fn stress(m: &MaterialSet, strain: &SymTensor3, efield: &Vector3<f64>) -> SymTensor3 {
    let elastic = m.elasticity.voigt * strain.to_mandel();
    let coupling = m.piezo.apply_adjoint(efield).to_mandel();
    SymTensor3::from_mandel(&(elastic - coupling))
}

/// D = eps E + e gamma(u).
pub fn electric_displacement(m: &MaterialSet, strain: &SymTensor3, efield: &Vector3<f64>) -> Vector3<f64> {
    m.eps * efield + m.piezo.apply(strain)
}

/// Max adjointness defect |(e g) . F - g : (e^T F)| over a fixed sample of
/// (g, F) pairs, normalized by the operand magnitudes.
pub fn piezo_adjoint_check(m: &MaterialSet) -> f64 {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(0x9e3779b9);
    let mut worst = 0.0f64;
    for _ in 0..100 {
        let g = SymTensor3::from_components(
            rng.gen_range(-1.0..1.0),
            rng.gen_range(-1.0..1.0),
            rng.gen_range(-1.0..1.0),
            rng.gen_range(-1.0..1.0),
            rng.gen_range(-1.0..1.0),
            rng.gen_range(-1.0..1.0),
        );
        let f = Vector3::new(
            rng.gen_range(-1.0..1.0),
            rng.gen_range(-1.0..1.0),
            rng.gen_range(-1.0..1.0),
        );
        let lhs = m.piezo.apply(&g).dot(&f);
        let rhs = g.ddot(&m.piezo.apply_adjoint(&f));
        let scale = 1.0 + lhs.abs().max(rhs.abs());
        worst = worst.max((lhs - rhs).abs() / scale);
    }
    worst
}
