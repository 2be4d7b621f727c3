//! Structured simplicial meshes on box domains.
//!
//! A box is split into a tensor grid of cubes (squares in 2D), each cube into
//! six tetrahedra (two triangles) by the Kuhn subdivision: one simplex per
//! axis permutation, all sharing the main diagonal. Connectivity is a pure
//! function of grid indices, so meshes are bit-reproducible.
//!
//! The paper behind this lab assumes a smooth domain; the box is a pragmatic
//! relaxation and its corner effects are absorbed into the discretization
//! error observed by the convergence tests.
//!
//! ```
//! use acl_core::mesh::{BoxDomain, SimplicialMesh};
//!
//! let domain = BoxDomain::centered_unit_cube();
//! let mesh = SimplicialMesh::build(&domain, 9).unwrap();
//! let vol: f64 = mesh.cell_volumes.iter().sum();
//! assert!((vol - 1.0).abs() < 1e-12);
//! ```

use num_complex::Complex64;
use thiserror::Error;

use crate::geom::{cross, dot, sub, Vec3};
use crate::quadrature::SimplexRule;

#[derive(Debug, Error)]
pub enum MeshError {
    #[error("n_per_axis must be at least 2, got {0}")]
    InvalidResolution(usize),
    #[error("box must satisfy lo < hi per axis, got lo={lo:?} hi={hi:?}")]
    InvalidBox { lo: Vec3, hi: Vec3 },
    #[error("spatial dimension must be 2 or 3, got {0}")]
    InvalidDimension(usize),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoxDomain {
    pub lo: Vec3,
    pub hi: Vec3,
    pub dim: usize,
}

impl BoxDomain {
    pub fn new(lo: Vec3, hi: Vec3, dim: usize) -> Result<Self, MeshError> {
        if dim != 2 && dim != 3 {
            return Err(MeshError::InvalidDimension(dim));
        }
        for i in 0..dim {
            if !(lo[i] < hi[i]) {
                return Err(MeshError::InvalidBox { lo, hi });
            }
        }
        let mut lo = lo;
        let mut hi = hi;
        if dim == 2 {
            lo[2] = 0.0;
            hi[2] = 0.0;
        }
        Ok(BoxDomain { lo, hi, dim })
    }

    /// [0,1]^3.
    pub fn unit_cube() -> Self {
        BoxDomain {
            lo: [0.0; 3],
            hi: [1.0; 3],
            dim: 3,
        }
    }

    /// [−½,½]^3 — the default domain: centering halves the peak exponent of
    /// the exponential solutions, halving their dynamic range.
    pub fn centered_unit_cube() -> Self {
        BoxDomain {
            lo: [-0.5; 3],
            hi: [0.5; 3],
            dim: 3,
        }
    }

    pub fn volume(&self) -> f64 {
        (0..self.dim).map(|i| self.hi[i] - self.lo[i]).product()
    }

    pub fn extent(&self, axis: usize) -> f64 {
        self.hi[axis] - self.lo[axis]
    }

    pub fn center(&self) -> Vec3 {
        let mut c = [0.0; 3];
        for i in 0..self.dim {
            c[i] = 0.5 * (self.lo[i] + self.hi[i]);
        }
        c
    }

    pub fn diameter(&self) -> f64 {
        (0..self.dim)
            .map(|i| (self.hi[i] - self.lo[i]).powi(2))
            .sum::<f64>()
            .sqrt()
    }

    /// max over the box of d · x (used to normalize exponential data).
    pub fn max_linear(&self, d: Vec3) -> f64 {
        let c = self.center();
        let mut m = dot(d, c);
        for i in 0..self.dim {
            m += d[i].abs() * 0.5 * self.extent(i);
        }
        m
    }
}

/// P1 simplicial mesh. `cells[c][3] == UNUSED` marks a triangle in 2D.
#[derive(Debug)]
pub struct SimplicialMesh {
    pub domain: BoxDomain,
    pub n_per_axis: usize,
    pub nodes: Vec<Vec3>,
    pub cells: Vec<[usize; 4]>,
    pub is_boundary: Vec<bool>,
    pub boundary_nodes: Vec<usize>,
    pub cell_volumes: Vec<f64>,
    /// Gradient of the local P1 basis function at each cell vertex.
    pub cell_grads: Vec<[Vec3; 4]>,
}

pub const UNUSED: usize = usize::MAX;

/// Vertex paths of the Kuhn subdivision: one simplex per axis permutation.
const PERMS3: [[usize; 3]; 6] = [
    [0, 1, 2],
    [0, 2, 1],
    [1, 0, 2],
    [1, 2, 0],
    [2, 0, 1],
    [2, 1, 0],
];

impl SimplicialMesh {
    pub fn build(domain: &BoxDomain, n_per_axis: usize) -> Result<Self, MeshError> {
        if n_per_axis < 2 {
            return Err(MeshError::InvalidResolution(n_per_axis));
        }
        let dim = domain.dim;
        let n = n_per_axis;
        let nz = if dim == 3 { n } else { 1 };
        let mut nodes = Vec::with_capacity(n * n * nz);
        let mut is_boundary = Vec::with_capacity(n * n * nz);
        let step: Vec3 = [
            domain.extent(0) / (n - 1) as f64,
            domain.extent(1) / (n - 1) as f64,
            if dim == 3 {
                domain.extent(2) / (n - 1) as f64
            } else {
                0.0
            },
        ];
        for iz in 0..nz {
            for iy in 0..n {
                for ix in 0..n {
                    nodes.push([
                        domain.lo[0] + ix as f64 * step[0],
                        domain.lo[1] + iy as f64 * step[1],
                        domain.lo[2] + iz as f64 * step[2],
                    ]);
                    let mut on_bd = ix == 0 || ix == n - 1 || iy == 0 || iy == n - 1;
                    if dim == 3 {
                        on_bd = on_bd || iz == 0 || iz == nz - 1;
                    }
                    is_boundary.push(on_bd);
                }
            }
        }

        let node_id = |ix: usize, iy: usize, iz: usize| ix + n * (iy + n * iz);
        let mut cells = Vec::new();
        if dim == 3 {
            for iz in 0..n - 1 {
                for iy in 0..n - 1 {
                    for ix in 0..n - 1 {
                        for perm in &PERMS3 {
                            let mut idx = [ix, iy, iz];
                            let mut cell = [node_id(idx[0], idx[1], idx[2]), 0, 0, 0];
                            for (k, &axis) in perm.iter().enumerate() {
                                idx[axis] += 1;
                                cell[k + 1] = node_id(idx[0], idx[1], idx[2]);
                            }
                            cells.push(cell);
                        }
                    }
                }
            }
        } else {
            for iy in 0..n - 1 {
                for ix in 0..n - 1 {
                    // Two triangles sharing the (ix,iy)–(ix+1,iy+1) diagonal.
                    cells.push([
                        node_id(ix, iy, 0),
                        node_id(ix + 1, iy, 0),
                        node_id(ix + 1, iy + 1, 0),
                        UNUSED,
                    ]);
                    cells.push([
                        node_id(ix, iy, 0),
                        node_id(ix + 1, iy + 1, 0),
                        node_id(ix, iy + 1, 0),
                        UNUSED,
                    ]);
                }
            }
        }

        let mut cell_volumes = Vec::with_capacity(cells.len());
        let mut cell_grads = Vec::with_capacity(cells.len());
        for cell in &mut cells {
            let (vol, grads) = Self::geometry(&nodes, cell, dim);
            cell_volumes.push(vol);
            cell_grads.push(grads);
        }

        let boundary_nodes = is_boundary
            .iter()
            .enumerate()
            .filter_map(|(i, &b)| b.then_some(i))
            .collect();

        Ok(SimplicialMesh {
            domain: *domain,
            n_per_axis,
            nodes,
            cells,
            is_boundary,
            boundary_nodes,
            cell_volumes,
            cell_grads,
        })
    }

    /// Volume and P1 basis gradients of one cell; reorders vertices in place
    /// to make the orientation positive.
    fn geometry(nodes: &[Vec3], cell: &mut [usize; 4], dim: usize) -> (f64, [Vec3; 4]) {
        if dim == 3 {
            let [a, b, c, d] = *cell;
            let e1 = sub(nodes[b], nodes[a]);
            let e2 = sub(nodes[c], nodes[a]);
            let e3 = sub(nodes[d], nodes[a]);
            let mut det = dot(e1, cross(e2, e3));
            if det < 0.0 {
                cell.swap(2, 3);
                det = -det;
            }
            let [a, b, c, d] = *cell;
            let e1 = sub(nodes[b], nodes[a]);
            let e2 = sub(nodes[c], nodes[a]);
            let e3 = sub(nodes[d], nodes[a]);
            // Rows of B^{-T} scaled by det: cofactor cross products.
            let g1 = cross(e2, e3);
            let g2 = cross(e3, e1);
            let g3 = cross(e1, e2);
            let inv = 1.0 / det;
            let g1 = [g1[0] * inv, g1[1] * inv, g1[2] * inv];
            let g2 = [g2[0] * inv, g2[1] * inv, g2[2] * inv];
            let g3 = [g3[0] * inv, g3[1] * inv, g3[2] * inv];
            let g0 = [
                -g1[0] - g2[0] - g3[0],
                -g1[1] - g2[1] - g3[1],
                -g1[2] - g2[2] - g3[2],
            ];
            (det / 6.0, [g0, g1, g2, g3])
        } else {
            let [a, b, c, _] = *cell;
            let e1 = sub(nodes[b], nodes[a]);
            let e2 = sub(nodes[c], nodes[a]);
            let det = e1[0] * e2[1] - e1[1] * e2[0];
            if det < 0.0 {
                cell.swap(1, 2);
            }
            let [a, b, c, _] = *cell;
            let e1 = sub(nodes[b], nodes[a]);
            let e2 = sub(nodes[c], nodes[a]);
            let det = e1[0] * e2[1] - e1[1] * e2[0];
            let inv = 1.0 / det;
            let g1 = [e2[1] * inv, -e2[0] * inv, 0.0];
            let g2 = [-e1[1] * inv, e1[0] * inv, 0.0];
            let g0 = [-g1[0] - g2[0], -g1[1] - g2[1], 0.0];
            (det / 2.0, [g0, g1, g2, [0.0; 3]])
        }
    }

    pub fn dim(&self) -> usize {
        self.domain.dim
    }

    pub fn n_nodes(&self) -> usize {
        self.nodes.len()
    }

    pub fn n_cells(&self) -> usize {
        self.cells.len()
    }

    pub fn verts_per_cell(&self) -> usize {
        self.dim() + 1
    }

    /// Grid spacing (isotropic boxes; the max over axes otherwise).
    pub fn h(&self) -> f64 {
        (0..self.dim())
            .map(|i| self.domain.extent(i) / (self.n_per_axis - 1) as f64)
            .fold(0.0, f64::max)
    }

    /// Constant gradient of a P1 field on one cell.
    pub fn gradient_on_cell(&self, values: &[f64], c: usize) -> Vec3 {
        let cell = &self.cells[c];
        let grads = &self.cell_grads[c];
        let mut g = [0.0; 3];
        for k in 0..self.verts_per_cell() {
            let v = values[cell[k]];
            g[0] += v * grads[k][0];
            g[1] += v * grads[k][1];
            g[2] += v * grads[k][2];
        }
        g
    }

    /// Physical coordinates of a reference-simplex point inside cell `c`.
    pub fn map_reference_point(&self, c: usize, r: Vec3) -> Vec3 {
        let cell = &self.cells[c];
        let v0 = self.nodes[cell[0]];
        let mut x = v0;
        for k in 0..self.dim() {
            let vk = self.nodes[cell[k + 1]];
            for i in 0..3 {
                x[i] += r[k] * (vk[i] - v0[i]);
            }
        }
        x
    }

    /// Σ_cells Σ_qp w·f(x) with a rule of the given polynomial degree.
    pub fn integrate(&self, degree: usize, mut f: impl FnMut(Vec3) -> f64) -> f64 {
        let rule = SimplexRule::for_dim(self.dim(), degree);
        let ref_vol = if self.dim() == 3 { 1.0 / 6.0 } else { 0.5 };
        let mut acc = 0.0;
        for c in 0..self.n_cells() {
            let scale = self.cell_volumes[c] / ref_vol;
            let mut cell_acc = 0.0;
            for (pt, &w) in rule.points.iter().zip(&rule.weights) {
                cell_acc += w * f(self.map_reference_point(c, *pt));
            }
            acc += cell_acc * scale;
        }
        acc
    }

    pub fn integrate_complex(
        &self,
        degree: usize,
        mut f: impl FnMut(Vec3) -> Complex64,
    ) -> Complex64 {
        let rule = SimplexRule::for_dim(self.dim(), degree);
        let ref_vol = if self.dim() == 3 { 1.0 / 6.0 } else { 0.5 };
        let mut acc = Complex64::new(0.0, 0.0);
        for c in 0..self.n_cells() {
            let scale = self.cell_volumes[c] / ref_vol;
            let mut cell_acc = Complex64::new(0.0, 0.0);
            for (pt, &w) in rule.points.iter().zip(&rule.weights) {
                cell_acc += f(self.map_reference_point(c, *pt)) * w;
            }
            acc += cell_acc * scale;
        }
        acc
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_cube_counts() {
        let mesh = SimplicialMesh::build(&BoxDomain::unit_cube(), 2).unwrap();
        assert_eq!(mesh.n_nodes(), 8);
        assert_eq!(mesh.n_cells(), 6);
        assert_eq!(mesh.boundary_nodes.len(), 8);
    }

    #[test]
    fn three_per_axis_counts() {
        let mesh = SimplicialMesh::build(&BoxDomain::unit_cube(), 3).unwrap();
        assert_eq!(mesh.n_nodes(), 27);
        assert_eq!(mesh.n_cells(), 48);
        assert_eq!(mesh.boundary_nodes.len(), 26);
    }

    #[test]
    fn rejects_degenerate_resolution() {
        assert!(matches!(
            SimplicialMesh::build(&BoxDomain::unit_cube(), 1),
            Err(MeshError::InvalidResolution(1))
        ));
    }

    #[test]
    fn volumes_tile_the_box() {
        for n in [2, 3, 5, 9] {
            let domain = BoxDomain::new([-0.5, -0.25, 0.0], [0.5, 0.75, 2.0], 3).unwrap();
            let mesh = SimplicialMesh::build(&domain, n).unwrap();
            let vol: f64 = mesh.cell_volumes.iter().sum();
            assert!(
                (vol - domain.volume()).abs() <= 1e-13 * domain.volume(),
                "n={n}: {vol}"
            );
            assert!(mesh.cell_volumes.iter().all(|&v| v > 0.0));
        }
    }

    #[test]
    fn volumes_tile_in_2d() {
        let domain = BoxDomain::new([0.0, 0.0, 0.0], [2.0, 1.0, 0.0], 2).unwrap();
        let mesh = SimplicialMesh::build(&domain, 4).unwrap();
        assert_eq!(mesh.n_cells(), 18);
        let vol: f64 = mesh.cell_volumes.iter().sum();
        assert!((vol - 2.0).abs() < 1e-14);
    }

    #[test]
    fn p1_gradient_of_affine_is_exact() {
        let mesh = SimplicialMesh::build(&BoxDomain::centered_unit_cube(), 4).unwrap();
        let g_true = [1.5, -2.0, 0.25];
        let values: Vec<f64> = mesh.nodes.iter().map(|x| dot(g_true, *x) + 0.3).collect();
        for c in 0..mesh.n_cells() {
            let g = mesh.gradient_on_cell(&values, c);
            for i in 0..3 {
                assert!((g[i] - g_true[i]).abs() < 1e-13, "cell {c}: {g:?}");
            }
        }
    }

    #[test]
    fn integrates_constants_and_quadratics() {
        let mesh = SimplicialMesh::build(&BoxDomain::unit_cube(), 5).unwrap();
        assert!((mesh.integrate(2, |_| 1.0) - 1.0).abs() < 1e-14);
        // x₁² on [0,1]³ integrates to 1/3; the degree-2 rule is exact.
        let q = mesh.integrate(2, |x| x[0] * x[0]);
        assert!((q - 1.0 / 3.0).abs() < 1e-12, "{q}");
    }

    #[test]
    fn oscillatory_integral_self_converges() {
        // k deliberately incommensurate with the grid: when the period tiles
        // the mesh exactly, per-cell errors cancel in a geometric sum and the
        // ratio test sees only roundoff.
        let k = 5.0;
        let exact = (Complex64::new(0.0, k).exp() - 1.0) / Complex64::new(0.0, k);
        let err = |n: usize| {
            let mesh = SimplicialMesh::build(&BoxDomain::unit_cube(), n).unwrap();
            (mesh.integrate_complex(2, |x| Complex64::new(0.0, k * x[0]).exp()) - exact).norm()
        };
        let e9 = err(9);
        let e17 = err(17);
        assert!(e9 / e17 >= 3.0, "e9={e9:.3e} e17={e17:.3e}");
    }

    #[test]
    fn max_linear_over_box() {
        let d = BoxDomain::centered_unit_cube();
        assert!((d.max_linear([1.0, 0.0, 0.0]) - 0.5).abs() < 1e-15);
        let z = [1.0 / 2.0_f64.sqrt(), 1.0 / 2.0_f64.sqrt(), 0.0];
        assert!((d.max_linear(z) - 1.0 / 2.0_f64.sqrt()).abs() < 1e-15);
    }
}
