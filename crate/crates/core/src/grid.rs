//! Axis-aligned box domain with a uniform hexahedral grid.
//!
//! Node enumeration is lexicographic with `x` fastest:
//! `node(i,j,k) = i + (n1+1)*(j + (n2+1)*k)`. Cells follow the same order
//! over `(i,j,k) < (n1,n2,n3)`. Boundary faces are enumerated wall by wall in
//! the order -x, +x, -y, +y, -z, +z, lexicographically within each wall.
//! This ordering is part of the checkpoint format contract.

use nalgebra::Vector3;

use crate::error::{Error, Result};

/// Uniform hexahedral grid on the box `[0,L1] x [0,L2] x [0,L3]`.
#[derive(Debug, Clone, PartialEq)]
pub struct BoxGrid {
    pub lengths: [f64; 3],
    pub cells: [usize; 3],
}

/// One quadrilateral face of the grid boundary.
#[derive(Debug, Clone)]
pub struct BoundaryFace {
    pub id: usize,
    /// Index of the cell owning this face.
    pub cell: usize,
    /// Outward unit normal, one of +-e_k.
    pub normal: Vector3<f64>,
    pub area: f64,
    pub centroid: Vector3<f64>,
    /// The four grid nodes of the face, counter-clockwise seen from outside.
    pub nodes: [usize; 4],
}

/// Star-shapedness report: `delta = min over the boundary of m(x) . nu`
/// with `m(x) = x - x0`.
#[derive(Debug, Clone, serde::Serialize)]
pub struct StarShapeReport {
    pub x0: [f64; 3],
    pub delta: f64,
    pub is_strict: bool,
}

pub fn build_grid(lengths: [f64; 3], cells: [usize; 3]) -> Result<BoxGrid> {
    for k in 0..3 {
        if !(lengths[k] > 0.0) || !lengths[k].is_finite() {
            return Err(Error::InvalidDimensions(format!(
                "lengths[{k}] = {} must be positive and finite",
                lengths[k]
            )));
        }
        if cells[k] < 2 {
            return Err(Error::InvalidDimensions(format!(
                "cells[{k}] = {} but at least 2 cells per direction are required",
                cells[k]
            )));
        }
    }
    Ok(BoxGrid { lengths, cells })
}

impl BoxGrid {
    pub fn spacing(&self) -> [f64; 3] {
        [
            self.lengths[0] / self.cells[0] as f64,
            self.lengths[1] / self.cells[1] as f64,
            self.lengths[2] / self.cells[2] as f64,
        ]
    }

    pub fn nodes_per_dim(&self) -> [usize; 3] {
        [self.cells[0] + 1, self.cells[1] + 1, self.cells[2] + 1]
    }

    pub fn node_count(&self) -> usize {
        let n = self.nodes_per_dim();
        n[0] * n[1] * n[2]
    }

    pub fn cell_count(&self) -> usize {
        self.cells[0] * self.cells[1] * self.cells[2]
    }

    pub fn boundary_face_count(&self) -> usize {
        let [n1, n2, n3] = self.cells;
        2 * (n1 * n2 + n2 * n3 + n1 * n3)
    }

    pub fn node_index(&self, i: usize, j: usize, k: usize) -> usize {
        let n = self.nodes_per_dim();
        debug_assert!(i < n[0] && j < n[1] && k < n[2]);
        i + n[0] * (j + n[1] * k)
    }

    /// Exact node coordinate `i * L / n` (no accumulated drift).
    pub fn node_coords(&self, idx: usize) -> Vector3<f64> {
        let n = self.nodes_per_dim();
        let i = idx % n[0];
        let j = (idx / n[0]) % n[1];
        let k = idx / (n[0] * n[1]);
        Vector3::new(
            i as f64 * self.lengths[0] / self.cells[0] as f64,
            j as f64 * self.lengths[1] / self.cells[1] as f64,
            k as f64 * self.lengths[2] / self.cells[2] as f64,
        )
    }

    pub fn cell_index(&self, i: usize, j: usize, k: usize) -> usize {
        debug_assert!(i < self.cells[0] && j < self.cells[1] && k < self.cells[2]);
        i + self.cells[0] * (j + self.cells[1] * k)
    }

    /// The 8 nodes of cell (i,j,k) in the standard hex8 local order:
    /// (0,0,0) (1,0,0) (1,1,0) (0,1,0) (0,0,1) (1,0,1) (1,1,1) (0,1,1).
    pub fn cell_nodes(&self, i: usize, j: usize, k: usize) -> [usize; 8] {
        [
            self.node_index(i, j, k),
            self.node_index(i + 1, j, k),
            self.node_index(i + 1, j + 1, k),
            self.node_index(i, j + 1, k),
            self.node_index(i, j, k + 1),
            self.node_index(i + 1, j, k + 1),
            self.node_index(i + 1, j + 1, k + 1),
            self.node_index(i, j + 1, k + 1),
        ]
    }

    pub fn cell_iter(&self) -> impl Iterator<Item = (usize, usize, usize)> + '_ {
        let [cx, cy, cz] = self.cells;
        (0..cz).flat_map(move |k| (0..cy).flat_map(move |j| (0..cx).map(move |i| (i, j, k))))
    }

    /// All boundary faces in the documented enumeration order.
    pub fn boundary_faces(&self) -> Vec<BoundaryFace> {
        let [cx, cy, cz] = self.cells;
        let h = self.spacing();
        let mut faces = Vec::with_capacity(self.boundary_face_count());
        let push = |faces: &mut Vec<BoundaryFace>,
                        cell: usize,
                        normal: Vector3<f64>,
                        nodes: [usize; 4],
                        area: f64| {
            let centroid = nodes
                .iter()
                .map(|&n| self.node_coords(n))
                .fold(Vector3::zeros(), |a, b| a + b)
                / 4.0;
            let id = faces.len();
            faces.push(BoundaryFace { id, cell, normal, area, centroid, nodes });
        };

        // -x and +x walls
        for sign in [0usize, 1] {
            for k in 0..cz {
                for j in 0..cy {
                    let (i, nx, ii) = if sign == 0 {
                        (0usize, -Vector3::x(), 0usize)
                    } else {
                        (cx - 1, Vector3::x(), cx)
                    };
                    let nodes = [
                        self.node_index(ii, j, k),
                        self.node_index(ii, j + 1, k),
                        self.node_index(ii, j + 1, k + 1),
                        self.node_index(ii, j, k + 1),
                    ];
                    push(&mut faces, self.cell_index(i, j, k), nx, nodes, h[1] * h[2]);
                }
            }
        }
        // -y and +y walls
        for sign in [0usize, 1] {
            for k in 0..cz {
                for i in 0..cx {
                    let (j, ny, jj) = if sign == 0 {
                        (0usize, -Vector3::y(), 0usize)
                    } else {
                        (cy - 1, Vector3::y(), cy)
                    };
                    let nodes = [
                        self.node_index(i, jj, k),
                        self.node_index(i + 1, jj, k),
                        self.node_index(i + 1, jj, k + 1),
                        self.node_index(i, jj, k + 1),
                    ];
                    push(&mut faces, self.cell_index(i, j, k), ny, nodes, h[0] * h[2]);
                }
            }
        }
        // -z and +z walls
        for sign in [0usize, 1] {
            for j in 0..cy {
                for i in 0..cx {
                    let (k, nz, kk) = if sign == 0 {
                        (0usize, -Vector3::z(), 0usize)
                    } else {
                        (cz - 1, Vector3::z(), cz)
                    };
                    let nodes = [
                        self.node_index(i, j, kk),
                        self.node_index(i + 1, j, kk),
                        self.node_index(i + 1, j + 1, kk),
                        self.node_index(i, j + 1, kk),
                    ];
                    push(&mut faces, self.cell_index(i, j, k), nz, nodes, h[0] * h[1]);
                }
            }
        }
        faces
    }

    /// True if the node lies on the boundary of the box.
    pub fn node_on_boundary(&self, idx: usize) -> bool {
        let n = self.nodes_per_dim();
        let i = idx % n[0];
        let j = (idx / n[0]) % n[1];
        let k = idx / (n[0] * n[1]);
        i == 0 || i == n[0] - 1 || j == 0 || j == n[1] - 1 || k == 0 || k == n[2] - 1
    }
}

/// Minimum of `(x - x0) . nu` over the boundary. On a box the minimum over
/// each planar face is attained at a corner, so corner-plus-centroid
/// evaluation is exact.
pub fn star_shaped_delta(grid: &BoxGrid, x0: Vector3<f64>) -> StarShapeReport {
    let mut delta = f64::INFINITY;
    for face in grid.boundary_faces() {
        let mut points: Vec<Vector3<f64>> =
            face.nodes.iter().map(|&n| grid.node_coords(n)).collect();
        points.push(face.centroid);
        for p in points {
            delta = delta.min((p - x0).dot(&face.normal));
        }
    }
    StarShapeReport { x0: [x0.x, x0.y, x0.z], delta, is_strict: delta > 0.0 }
}

/// `max |grad alpha|` over the grid nodes for a nodal scalar field, using
/// centered differences in the interior and one-sided differences on the
/// boundary layer.
pub fn c_alpha(grid: &BoxGrid, alpha: &[f64]) -> f64 {
    let n = grid.nodes_per_dim();
    assert_eq!(alpha.len(), grid.node_count(), "alpha must be sampled at all nodes");
    let h = grid.spacing();
    let mut worst = 0.0f64;
    for k in 0..n[2] {
        for j in 0..n[1] {
            for i in 0..n[0] {
                let at = |i: usize, j: usize, k: usize| alpha[grid.node_index(i, j, k)];
                let d = |lo: f64, hi: f64, up: bool, down: bool, h: f64, mid: f64| -> f64 {
                    if up && down {
                        (hi - lo) / (2.0 * h)
                    } else if up {
                        (hi - mid) / h
                    } else {
                        (mid - lo) / h
                    }
                };
                let mid = at(i, j, k);
                let gx = d(
                    if i > 0 { at(i - 1, j, k) } else { 0.0 },
                    if i + 1 < n[0] { at(i + 1, j, k) } else { 0.0 },
                    i + 1 < n[0],
                    i > 0,
                    h[0],
                    mid,
                );
                let gy = d(
                    if j > 0 { at(i, j - 1, k) } else { 0.0 },
                    if j + 1 < n[1] { at(i, j + 1, k) } else { 0.0 },
                    j + 1 < n[1],
                    j > 0,
                    h[1],
                    mid,
                );
                let gz = d(
                    if k > 0 { at(i, j, k - 1) } else { 0.0 },
                    if k + 1 < n[2] { at(i, j, k + 1) } else { 0.0 },
                    k + 1 < n[2],
                    k > 0,
                    h[2],
                    mid,
                );
                worst = worst.max((gx * gx + gy * gy + gz * gz).sqrt());
            }
        }
    }
    worst
}

/// Splits `x` into normal and tangential parts with respect to a unit normal.
/// `|x_tau|^2 = |x cross nu|^2`, which is the form entering the boundary flux.
pub fn tangential_decompose(x: Vector3<f64>, nu: Vector3<f64>) -> (Vector3<f64>, Vector3<f64>) {
    let x_nu = nu * x.dot(&nu);
    (x_nu, x - x_nu)
}
