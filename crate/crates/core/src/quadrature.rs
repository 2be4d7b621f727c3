//! Quadrature rules on the reference simplex.
//!
//! Degrees 1 and 2 use the classic symmetric point sets; degrees 3–6 are
//! built by collapsing a tensor Gauss–Legendre grid onto the simplex (Duffy
//! transform), so no tabulated high-order rules are trusted. Gauss–Legendre
//! nodes themselves are computed by Newton iteration on the Legendre
//! recurrence.
//!
//! Reference domains: tetrahedron {x,y,z ≥ 0, x+y+z ≤ 1} (volume 1/6) and
//! triangle {x,y ≥ 0, x+y ≤ 1} (area 1/2). Weights sum to the reference
//! volume.

use crate::geom::Vec3;

pub const MAX_DEGREE: usize = 6;

/// Gauss–Legendre nodes and weights on [0, 1].
pub fn gauss_legendre_01(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 1);
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    for k in 0..n {
        // Chebyshev-like initial guess on [-1, 1].
        let mut x = (std::f64::consts::PI * (k as f64 + 0.75) / (n as f64 + 0.5)).cos();
        for _ in 0..100 {
            let (p, dp) = legendre_with_derivative(n, x);
            let dx = p / dp;
            x -= dx;
            if dx.abs() < 1e-15 {
                break;
            }
        }
        let (_, dp) = legendre_with_derivative(n, x);
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        // Map [-1,1] -> [0,1]; nodes come out descending in x, ascending here.
        nodes[n - 1 - k] = 0.5 * (x + 1.0);
        weights[n - 1 - k] = 0.5 * w;
    }
    (nodes, weights)
}

fn legendre_with_derivative(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    let dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, dp)
}

/// Quadrature rule on a reference simplex.
#[derive(Debug, Clone)]
pub struct SimplexRule {
    /// Points in reference coordinates (third component unused in 2D).
    pub points: Vec<Vec3>,
    pub weights: Vec<f64>,
    pub degree: usize,
    pub dim: usize,
}

impl SimplexRule {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Measure of the reference simplex; the weights sum to this.
    pub fn reference_volume(&self) -> f64 {
        if self.dim == 3 {
            1.0 / 6.0
        } else {
            0.5
        }
    }

    pub fn tetrahedron(degree: usize) -> SimplexRule {
        let degree = degree.clamp(1, MAX_DEGREE);
        match degree {
            1 => SimplexRule {
                points: vec![[0.25, 0.25, 0.25]],
                weights: vec![1.0 / 6.0],
                degree,
                dim: 3,
            },
            2 => {
                // Symmetric 4-point rule, exact through degree 2.
                let a = (5.0 - 5.0_f64.sqrt()) / 20.0;
                let b = (5.0 + 3.0 * 5.0_f64.sqrt()) / 20.0;
                let mut points = Vec::with_capacity(4);
                for i in 0..4 {
                    let mut bary = [a; 4];
                    bary[i] = b;
                    points.push([bary[1], bary[2], bary[3]]);
                }
                SimplexRule {
                    points,
                    weights: vec![1.0 / 24.0; 4],
                    degree,
                    dim: 3,
                }
            }
            d => Self::tet_duffy(d),
        }
    }

    /// Collapsed tensor rule: x = a, y = b(1−a), z = c(1−a)(1−b), with
    /// Jacobian (1−a)²(1−b). A degree-d polynomial in (x,y,z) times the
    /// Jacobian has degree ≤ d+2 in a, ≤ d+1 in b, ≤ d in c.
    fn tet_duffy(degree: usize) -> SimplexRule {
        let ma = (degree + 3).div_ceil(2);
        let mb = (degree + 2).div_ceil(2);
        let mc = (degree + 1).div_ceil(2);
        let (na, wa) = gauss_legendre_01(ma);
        let (nb, wb) = gauss_legendre_01(mb);
        let (nc, wc) = gauss_legendre_01(mc);
        let mut points = Vec::with_capacity(ma * mb * mc);
        let mut weights = Vec::with_capacity(ma * mb * mc);
        for (i, &a) in na.iter().enumerate() {
            for (j, &b) in nb.iter().enumerate() {
                for (k, &c) in nc.iter().enumerate() {
                    points.push([a, b * (1.0 - a), c * (1.0 - a) * (1.0 - b)]);
                    weights.push(wa[i] * wb[j] * wc[k] * (1.0 - a) * (1.0 - a) * (1.0 - b));
                }
            }
        }
        SimplexRule {
            points,
            weights,
            degree,
            dim: 3,
        }
    }

    pub fn triangle(degree: usize) -> SimplexRule {
        let degree = degree.clamp(1, MAX_DEGREE);
        match degree {
            1 => SimplexRule {
                points: vec![[1.0 / 3.0, 1.0 / 3.0, 0.0]],
                weights: vec![0.5],
                degree,
                dim: 2,
            },
            2 => SimplexRule {
                points: vec![
                    [1.0 / 6.0, 1.0 / 6.0, 0.0],
                    [2.0 / 3.0, 1.0 / 6.0, 0.0],
                    [1.0 / 6.0, 2.0 / 3.0, 0.0],
                ],
                weights: vec![1.0 / 6.0; 3],
                degree,
                dim: 2,
            },
            d => Self::tri_duffy(d),
        }
    }

    fn tri_duffy(degree: usize) -> SimplexRule {
        let ma = (degree + 2).div_ceil(2);
        let mb = (degree + 1).div_ceil(2);
        let (na, wa) = gauss_legendre_01(ma);
        let (nb, wb) = gauss_legendre_01(mb);
        let mut points = Vec::with_capacity(ma * mb);
        let mut weights = Vec::with_capacity(ma * mb);
        for (i, &a) in na.iter().enumerate() {
            for (j, &b) in nb.iter().enumerate() {
                points.push([a, b * (1.0 - a), 0.0]);
                weights.push(wa[i] * wb[j] * (1.0 - a));
            }
        }
        SimplexRule {
            points,
            weights,
            degree,
            dim: 2,
        }
    }

    pub fn for_dim(dim: usize, degree: usize) -> SimplexRule {
        match dim {
            2 => Self::triangle(degree),
            _ => Self::tetrahedron(degree),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn factorial(n: usize) -> f64 {
        (1..=n).map(|k| k as f64).product()
    }

    /// ∫_ref-tet x^a y^b z^c = a! b! c! / (a+b+c+3)!
    fn tet_monomial_exact(a: usize, b: usize, c: usize) -> f64 {
        factorial(a) * factorial(b) * factorial(c) / factorial(a + b + c + 3)
    }

    /// ∫_ref-tri x^a y^b = a! b! / (a+b+2)!
    fn tri_monomial_exact(a: usize, b: usize) -> f64 {
        factorial(a) * factorial(b) / factorial(a + b + 2)
    }

    #[test]
    fn gauss_legendre_two_point() {
        let (x, w) = gauss_legendre_01(2);
        let d = 0.5 / 3.0_f64.sqrt();
        assert!((x[0] - (0.5 - d)).abs() < 1e-14);
        assert!((x[1] - (0.5 + d)).abs() < 1e-14);
        assert!((w[0] - 0.5).abs() < 1e-14 && (w[1] - 0.5).abs() < 1e-14);
    }

    #[test]
    fn gauss_legendre_exactness() {
        for n in 1..=8 {
            let (x, w) = gauss_legendre_01(n);
            for deg in 0..=(2 * n - 1) {
                let q: f64 = x.iter().zip(&w).map(|(&xi, &wi)| wi * xi.powi(deg as i32)).sum();
                let exact = 1.0 / (deg as f64 + 1.0);
                assert!(
                    (q - exact).abs() < 1e-13,
                    "n={n} deg={deg}: {q} vs {exact}"
                );
            }
        }
    }

    #[test]
    fn tet_rules_integrate_monomials_exactly() {
        for degree in 1..=MAX_DEGREE {
            let rule = SimplexRule::tetrahedron(degree);
            for a in 0..=degree {
                for b in 0..=(degree - a) {
                    for c in 0..=(degree - a - b) {
                        let q: f64 = rule
                            .points
                            .iter()
                            .zip(&rule.weights)
                            .map(|(p, &w)| {
                                w * p[0].powi(a as i32) * p[1].powi(b as i32) * p[2].powi(c as i32)
                            })
                            .sum();
                        let exact = tet_monomial_exact(a, b, c);
                        assert!(
                            (q - exact).abs() < 1e-14,
                            "deg={degree} monomial ({a},{b},{c}): {q} vs {exact}"
                        );
                    }
                }
            }
        }
    }

    #[test]
    fn tri_rules_integrate_monomials_exactly() {
        for degree in 1..=MAX_DEGREE {
            let rule = SimplexRule::triangle(degree);
            for a in 0..=degree {
                for b in 0..=(degree - a) {
                    let q: f64 = rule
                        .points
                        .iter()
                        .zip(&rule.weights)
                        .map(|(p, &w)| w * p[0].powi(a as i32) * p[1].powi(b as i32))
                        .sum();
                    let exact = tri_monomial_exact(a, b);
                    assert!(
                        (q - exact).abs() < 1e-14,
                        "deg={degree} monomial ({a},{b}): {q} vs {exact}"
                    );
                }
            }
        }
    }

    #[test]
    fn weights_sum_to_reference_volume() {
        for degree in 1..=MAX_DEGREE {
            let tet: f64 = SimplexRule::tetrahedron(degree).weights.iter().sum();
            assert!((tet - 1.0 / 6.0).abs() < 1e-14);
            let tri: f64 = SimplexRule::triangle(degree).weights.iter().sum();
            assert!((tri - 0.5).abs() < 1e-14);
        }
    }
}
