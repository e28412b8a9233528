//! Trilinear (hex8) shape functions and Gauss quadrature on the uniform grid.
//!
//! All cells of a `BoxGrid` share the same diagonal Jacobian, so reference
//! quantities are tabulated once. The 2x2x2 rule integrates every assembled
//! volume integrand exactly (per-variable degree <= 3), and the 2x2 face rule
//! does the same for the boundary forms with face-constant coefficients.

use nalgebra::Vector3;

use crate::grid::{BoundaryFace, BoxGrid};

/// 1D Gauss points on [-1, 1].
pub const GAUSS_1D: [f64; 2] = [-0.577_350_269_189_625_8, 0.577_350_269_189_625_8];

/// Reference-cell corner signs in hex8 local order.
pub const CORNERS: [[f64; 3]; 8] = [
    [-1.0, -1.0, -1.0],
    [1.0, -1.0, -1.0],
    [1.0, 1.0, -1.0],
    [-1.0, 1.0, -1.0],
    [-1.0, -1.0, 1.0],
    [1.0, -1.0, 1.0],
    [1.0, 1.0, 1.0],
    [-1.0, 1.0, 1.0],
];

/// N_a at a reference point.
pub fn shape(a: usize, xi: [f64; 3]) -> f64 {
    let c = CORNERS[a];
    0.125 * (1.0 + c[0] * xi[0]) * (1.0 + c[1] * xi[1]) * (1.0 + c[2] * xi[2])
}

/// dN_a/dxi at a reference point.
pub fn shape_grad(a: usize, xi: [f64; 3]) -> [f64; 3] {
    let c = CORNERS[a];
    [
        0.125 * c[0] * (1.0 + c[1] * xi[1]) * (1.0 + c[2] * xi[2]),
        0.125 * (1.0 + c[0] * xi[0]) * c[1] * (1.0 + c[2] * xi[2]),
        0.125 * (1.0 + c[0] * xi[0]) * (1.0 + c[1] * xi[1]) * c[2],
    ]
}

/// One volume quadrature point: shape values, physical-space gradients and
/// the quadrature weight including the Jacobian determinant.
#[derive(Debug, Clone)]
pub struct VolumeQuadPoint {
    pub n: [f64; 8],
    /// grad N_a in physical coordinates; [a][component].
    pub grad: [[f64; 3]; 8],
    pub weight: f64,
}

/// The 8 tabulated quadrature points shared by every cell of the grid.
pub fn volume_quad_points(grid: &BoxGrid) -> Vec<VolumeQuadPoint> {
    let h = grid.spacing();
    let det = h[0] * h[1] * h[2] / 8.0;
    let mut pts = Vec::with_capacity(8);
    for &gz in &GAUSS_1D {
        for &gy in &GAUSS_1D {
            for &gx in &GAUSS_1D {
                let xi = [gx, gy, gz];
                let mut n = [0.0; 8];
                let mut grad = [[0.0; 3]; 8];
                for a in 0..8 {
                    n[a] = shape(a, xi);
                    let g = shape_grad(a, xi);
                    grad[a] = [2.0 * g[0] / h[0], 2.0 * g[1] / h[1], 2.0 * g[2] / h[2]];
                }
                pts.push(VolumeQuadPoint { n, grad, weight: det });
            }
        }
    }
    pts
}

/// Physical position of a reference point inside cell (i, j, k).
pub fn cell_point(grid: &BoxGrid, cell: (usize, usize, usize), xi: [f64; 3]) -> Vector3<f64> {
    let h = grid.spacing();
    Vector3::new(
        (cell.0 as f64 + 0.5 * (1.0 + xi[0])) * h[0],
        (cell.1 as f64 + 0.5 * (1.0 + xi[1])) * h[1],
        (cell.2 as f64 + 0.5 * (1.0 + xi[2])) * h[2],
    )
}

/// The four 2x2 Gauss points of a boundary face: physical position, the four
/// face-node shape values, and the weight including the area element.
pub fn face_quad_points(grid: &BoxGrid, face: &BoundaryFace) -> [(Vector3<f64>, [f64; 4], f64); 4] {
    let corners: Vec<Vector3<f64>> = face.nodes.iter().map(|&n| grid.node_coords(n)).collect();
    let weight = face.area / 4.0;
    let mut out = [(Vector3::zeros(), [0.0; 4], 0.0); 4];
    let mut q = 0;
    for &gb in &GAUSS_1D {
        for &ga in &GAUSS_1D {
            // bilinear embedding of the quad, consistent with the node order
            let n = [
                0.25 * (1.0 - ga) * (1.0 - gb),
                0.25 * (1.0 + ga) * (1.0 - gb),
                0.25 * (1.0 + ga) * (1.0 + gb),
                0.25 * (1.0 - ga) * (1.0 + gb),
            ];
            let pos = corners
                .iter()
                .zip(n.iter())
                .map(|(c, w)| c * *w)
                .fold(Vector3::zeros(), |acc, v| acc + v);
            out[q] = (pos, n, weight);
            q += 1;
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::build_grid;
    use approx::assert_relative_eq;

    #[test]
    fn shapes_are_a_partition_of_unity() {
        let xi = [0.3, -0.7, 0.5];
        let total: f64 = (0..8).map(|a| shape(a, xi)).sum();
        assert_relative_eq!(total, 1.0, epsilon = 1e-14);
        for d in 0..3 {
            let g: f64 = (0..8).map(|a| shape_grad(a, xi)[d]).sum();
            assert!(g.abs() < 1e-14);
        }
    }

    #[test]
    fn volume_rule_integrates_cell_volume() {
        let g = build_grid([2.0, 1.0, 0.5], [2, 2, 2]).unwrap();
        let pts = volume_quad_points(&g);
        let vol: f64 = pts.iter().map(|p| p.weight).sum();
        let h = g.spacing();
        assert_relative_eq!(vol, h[0] * h[1] * h[2], epsilon = 1e-14);
    }

    #[test]
    fn face_rule_integrates_face_area() {
        let g = build_grid([1.0, 2.0, 3.0], [2, 2, 2]).unwrap();
        for face in g.boundary_faces() {
            let pts = face_quad_points(&g, &face);
            let area: f64 = pts.iter().map(|p| p.2).sum();
            assert_relative_eq!(area, face.area, epsilon = 1e-13);
            for (pos, _, _) in pts {
                // quadrature points lie on the face plane
                let axis = (0..3).find(|&a| face.normal[a].abs() == 1.0).unwrap();
                let plane = face.centroid[axis];
                assert_relative_eq!(pos[axis], plane, epsilon = 1e-13);
            }
        }
    }
}
