//! Small fixed-size vector/matrix helpers shared by the assembly and
//! reconstruction kernels. All pairings here are bilinear (no conjugation):
//! the reconstruction identities contract complex vectors against real
//! symmetric matrices without Hermitian structure.

use num_complex::Complex64;

pub type Vec3 = [f64; 3];
pub type Mat3 = [[f64; 3]; 3];
pub type CVec3 = [Complex64; 3];
pub type CMat3 = [[Complex64; 3]; 3];

pub fn dot(a: Vec3, b: Vec3) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

pub fn norm(a: Vec3) -> f64 {
    dot(a, a).sqrt()
}

pub fn scale(a: Vec3, c: f64) -> Vec3 {
    [a[0] * c, a[1] * c, a[2] * c]
}

pub fn add(a: Vec3, b: Vec3) -> Vec3 {
    [a[0] + b[0], a[1] + b[1], a[2] + b[2]]
}

pub fn sub(a: Vec3, b: Vec3) -> Vec3 {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

pub fn cross(a: Vec3, b: Vec3) -> Vec3 {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

pub fn normalize(a: Vec3) -> Vec3 {
    scale(a, 1.0 / norm(a))
}

pub fn matvec(m: &Mat3, v: Vec3) -> Vec3 {
    [dot(m[0], v), dot(m[1], v), dot(m[2], v)]
}

/// v · M w for a real matrix and real vectors.
pub fn quad_form(m: &Mat3, v: Vec3, w: Vec3) -> f64 {
    dot(v, matvec(m, w))
}

pub fn mat_add(a: &Mat3, b: &Mat3) -> Mat3 {
    let mut out = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            out[i][j] = a[i][j] + b[i][j];
        }
    }
    out
}

pub fn mat_scale(a: &Mat3, c: f64) -> Mat3 {
    let mut out = *a;
    for row in &mut out {
        for x in row {
            *x *= c;
        }
    }
    out
}

pub fn identity() -> Mat3 {
    [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]]
}

/// a ⊗ b (outer product).
pub fn outer(a: Vec3, b: Vec3) -> Mat3 {
    let mut out = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            out[i][j] = a[i] * b[j];
        }
    }
    out
}

pub fn czero() -> Complex64 {
    Complex64::new(0.0, 0.0)
}

pub fn cvec_from_real(v: Vec3) -> CVec3 {
    [v[0].into(), v[1].into(), v[2].into()]
}

/// Bilinear (unconjugated) complex dot product Σ aᵢ bᵢ.
pub fn cdot(a: CVec3, b: CVec3) -> Complex64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

/// Bilinear pairing of a complex vector with a real one.
pub fn cdot_real(a: CVec3, b: Vec3) -> Complex64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

/// a · M b with real M and complex a, b (bilinear).
pub fn cquad_form(m: &Mat3, a: CVec3, b: CVec3) -> Complex64 {
    let mb = [
        b[0] * m[0][0] + b[1] * m[0][1] + b[2] * m[0][2],
        b[0] * m[1][0] + b[1] * m[1][1] + b[2] * m[1][2],
        b[0] * m[2][0] + b[1] * m[2][1] + b[2] * m[2][2],
    ];
    cdot(a, mb)
}

/// a · M b with complex M (bilinear).
pub fn cquad_form_c(m: &CMat3, a: CVec3, b: CVec3) -> Complex64 {
    let mut acc = czero();
    for i in 0..3 {
        for j in 0..3 {
            acc += a[i] * m[i][j] * b[j];
        }
    }
    acc
}

/// Squared Hermitian magnitude Σ |aᵢ|².
pub fn cnorm_sq(a: CVec3) -> f64 {
    a[0].norm_sqr() + a[1].norm_sqr() + a[2].norm_sqr()
}
