//! Nodal P1 coefficient fields and their file format.
//!
//! Complex fields are two real fields; every solver path treats them by
//! linearity. Files come in pairs: `<base>.json` holds
//! `{"dims","lo","hi","kind"}` and `<base>.bin` holds flat little-endian f64
//! values, node-major with the x-index fastest (complex interleaved re/im,
//! matrices row-major 9 per node).

use std::io::{Read, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geom::{norm, Vec3};
use crate::mesh::{BoxDomain, MeshError, SimplicialMesh};

#[derive(Debug, Error)]
pub enum FieldError {
    #[error("value count {got} does not match mesh node count {want}")]
    LengthMismatch { got: usize, want: usize },
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("metadata error on {path}: {reason}")]
    Metadata { path: PathBuf, reason: String },
    #[error(transparent)]
    Mesh(#[from] MeshError),
}

#[derive(Debug, Clone)]
pub struct NodalField {
    pub mesh: Arc<SimplicialMesh>,
    pub values: Vec<f64>,
}

impl NodalField {
    pub fn new(mesh: Arc<SimplicialMesh>, values: Vec<f64>) -> Result<Self, FieldError> {
        if values.len() != mesh.n_nodes() {
            return Err(FieldError::LengthMismatch {
                got: values.len(),
                want: mesh.n_nodes(),
            });
        }
        Ok(NodalField { mesh, values })
    }

    pub fn zeros(mesh: Arc<SimplicialMesh>) -> Self {
        let n = mesh.n_nodes();
        NodalField {
            mesh,
            values: vec![0.0; n],
        }
    }

    pub fn interpolate(mesh: Arc<SimplicialMesh>, f: impl Fn(Vec3) -> f64) -> Self {
        let values = mesh.nodes.iter().map(|&x| f(x)).collect();
        NodalField { mesh, values }
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn max_abs_boundary(&self) -> f64 {
        self.mesh
            .boundary_nodes
            .iter()
            .fold(0.0, |m, &i| m.max(self.values[i].abs()))
    }

    /// Discrete C¹ proxy: max nodal |value| + max cellwise |gradient|.
    pub fn c1_norm(&self) -> f64 {
        let max_grad = (0..self.mesh.n_cells())
            .map(|c| norm(self.mesh.gradient_on_cell(&self.values, c)))
            .fold(0.0, f64::max);
        self.max_abs() + max_grad
    }

    /// self + c·other, nodewise.
    pub fn axpy(&self, c: f64, other: &NodalField) -> NodalField {
        let values = self
            .values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| a + c * b)
            .collect();
        NodalField {
            mesh: Arc::clone(&self.mesh),
            values,
        }
    }

    pub fn scaled(&self, c: f64) -> NodalField {
        NodalField {
            mesh: Arc::clone(&self.mesh),
            values: self.values.iter().map(|v| c * v).collect(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct ComplexNodalField {
    pub re: NodalField,
    pub im: NodalField,
}

impl ComplexNodalField {
    pub fn interpolate(mesh: Arc<SimplicialMesh>, f: impl Fn(Vec3) -> Complex64) -> Self {
        let vals: Vec<Complex64> = mesh.nodes.iter().map(|&x| f(x)).collect();
        let re = NodalField {
            mesh: Arc::clone(&mesh),
            values: vals.iter().map(|z| z.re).collect(),
        };
        let im = NodalField {
            mesh,
            values: vals.iter().map(|z| z.im).collect(),
        };
        ComplexNodalField { re, im }
    }

    pub fn value(&self, node: usize) -> Complex64 {
        Complex64::new(self.re.values[node], self.im.values[node])
    }
}

/// One symmetric 3×3 matrix per node, stored row-major.
#[derive(Debug, Clone)]
pub struct MatrixNodalField {
    pub mesh: Arc<SimplicialMesh>,
    pub values: Vec<[f64; 9]>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FieldKind {
    Scalar,
    Complex,
    Matrix,
}

#[derive(Debug, Serialize, Deserialize)]
struct FieldMeta {
    dims: [usize; 3],
    lo: Vec3,
    hi: Vec3,
    kind: FieldKind,
}

fn write_parts(base: &Path, meta: &FieldMeta, data: &[f64]) -> Result<(), FieldError> {
    let json_path = base.with_extension("json");
    let bin_path = base.with_extension("bin");
    let io_err = |path: &Path| {
        let path = path.to_path_buf();
        move |source| FieldError::Io { path, source }
    };
    let text = serde_json::to_string_pretty(meta).expect("metadata serializes");
    std::fs::write(&json_path, text).map_err(io_err(&json_path))?;
    let mut bytes = Vec::with_capacity(data.len() * 8);
    for v in data {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    let mut file = std::fs::File::create(&bin_path).map_err(io_err(&bin_path))?;
    file.write_all(&bytes).map_err(io_err(&bin_path))?;
    Ok(())
}

fn meta_for(mesh: &SimplicialMesh, kind: FieldKind) -> FieldMeta {
    let n = mesh.n_per_axis;
    FieldMeta {
        dims: [n, n, if mesh.dim() == 3 { n } else { 1 }],
        lo: mesh.domain.lo,
        hi: mesh.domain.hi,
        kind,
    }
}

pub fn write_scalar_field(field: &NodalField, base: &Path) -> Result<(), FieldError> {
    write_parts(base, &meta_for(&field.mesh, FieldKind::Scalar), &field.values)
}

pub fn write_complex_field(field: &ComplexNodalField, base: &Path) -> Result<(), FieldError> {
    let mut data = Vec::with_capacity(2 * field.re.values.len());
    for (r, i) in field.re.values.iter().zip(&field.im.values) {
        data.push(*r);
        data.push(*i);
    }
    write_parts(base, &meta_for(&field.re.mesh, FieldKind::Complex), &data)
}

pub fn write_matrix_field(field: &MatrixNodalField, base: &Path) -> Result<(), FieldError> {
    let mut data = Vec::with_capacity(9 * field.values.len());
    for m in &field.values {
        data.extend_from_slice(m);
    }
    write_parts(base, &meta_for(&field.mesh, FieldKind::Matrix), &data)
}

/// Raw contents of a field file pair, not yet bound to a mesh.
#[derive(Debug)]
pub struct RawField {
    pub dims: [usize; 3],
    pub domain: BoxDomain,
    pub kind: FieldKind,
    pub data: Vec<f64>,
}

pub fn read_field(base: &Path) -> Result<RawField, FieldError> {
    let json_path = base.with_extension("json");
    let bin_path = base.with_extension("bin");
    let text = std::fs::read_to_string(&json_path).map_err(|source| FieldError::Io {
        path: json_path.clone(),
        source,
    })?;
    let meta: FieldMeta = serde_json::from_str(&text).map_err(|e| FieldError::Metadata {
        path: json_path.clone(),
        reason: e.to_string(),
    })?;
    let mut bytes = Vec::new();
    std::fs::File::open(&bin_path)
        .and_then(|mut f| f.read_to_end(&mut bytes))
        .map_err(|source| FieldError::Io {
            path: bin_path.clone(),
            source,
        })?;
    if bytes.len() % 8 != 0 {
        return Err(FieldError::Metadata {
            path: bin_path,
            reason: format!("binary length {} is not a multiple of 8", bytes.len()),
        });
    }
    let data: Vec<f64> = bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")))
        .collect();
    let n_nodes = meta.dims.iter().product::<usize>();
    let per_node = match meta.kind {
        FieldKind::Scalar => 1,
        FieldKind::Complex => 2,
        FieldKind::Matrix => 9,
    };
    if data.len() != n_nodes * per_node {
        return Err(FieldError::Metadata {
            path: bin_path,
            reason: format!(
                "expected {} values for dims {:?} kind {:?}, got {}",
                n_nodes * per_node,
                meta.dims,
                meta.kind,
                data.len()
            ),
        });
    }
    let dim = if meta.dims[2] <= 1 { 2 } else { 3 };
    let domain = BoxDomain::new(meta.lo, meta.hi, dim)?;
    Ok(RawField {
        dims: meta.dims,
        domain,
        kind: meta.kind,
        data,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_mesh() -> Arc<SimplicialMesh> {
        Arc::new(SimplicialMesh::build(&BoxDomain::centered_unit_cube(), 3).unwrap())
    }

    #[test]
    fn interpolation_hits_nodes() {
        let mesh = small_mesh();
        let f = NodalField::interpolate(Arc::clone(&mesh), |x| x[0]);
        for (x, v) in mesh.nodes.iter().zip(&f.values) {
            assert_eq!(x[0], *v);
        }
        let all: Vec<f64> = f.values.iter().map(|v| v.abs()).collect();
        assert!(all.iter().all(|v| *v == 0.0 || *v == 0.5));
    }

    #[test]
    fn complex_interpolation_matches_pointwise() {
        let mesh = small_mesh();
        let xi = [std::f64::consts::PI, 0.0, 0.0];
        let f = ComplexNodalField::interpolate(Arc::clone(&mesh), |x| {
            Complex64::new(0.0, xi[0] * x[0] + xi[1] * x[1] + xi[2] * x[2]).exp()
        });
        for (i, x) in mesh.nodes.iter().enumerate() {
            let want = Complex64::new(0.0, xi[0] * x[0]).exp();
            assert!((f.value(i) - want).norm() < 1e-15);
        }
    }

    #[test]
    fn roundtrips_scalar_and_complex_files() {
        let dir = tempfile::tempdir().unwrap();
        let mesh = small_mesh();
        let f = NodalField::interpolate(Arc::clone(&mesh), |x| x[0] + 2.0 * x[1]);
        let base = dir.path().join("u");
        write_scalar_field(&f, &base).unwrap();
        let raw = read_field(&base).unwrap();
        assert_eq!(raw.kind, FieldKind::Scalar);
        assert_eq!(raw.dims, [3, 3, 3]);
        assert_eq!(raw.data, f.values);

        let g = ComplexNodalField::interpolate(Arc::clone(&mesh), |x| Complex64::new(x[0], x[1]));
        let base = dir.path().join("w");
        write_complex_field(&g, &base).unwrap();
        let raw = read_field(&base).unwrap();
        assert_eq!(raw.kind, FieldKind::Complex);
        assert_eq!(raw.data[0], g.re.values[0]);
        assert_eq!(raw.data[1], g.im.values[0]);
    }

    #[test]
    fn c1_norm_of_linear_field() {
        let mesh = small_mesh();
        let f = NodalField::interpolate(mesh, |x| 2.0 * x[0]);
        // max |value| = 1 at x₀ = ±½; gradient magnitude 2 everywhere.
        assert!((f.c1_norm() - 3.0).abs() < 1e-13);
    }
}
