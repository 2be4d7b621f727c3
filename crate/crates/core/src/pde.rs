//! Forward solvers and weak Dirichlet-to-Neumann pairings.
//!
//! The quasilinear equation ∇·(γ∇u + |∇u|^{p−2}∇u) = 0 is the Euler–Lagrange
//! condition of the convex energy ½∫∇u·γ∇u + (1/p)∫|∇u|^p, so the solver is
//! damped Newton with an energy backtracking line search: descent is
//! guaranteed and the energy sequence is non-increasing.
//!
//! Numerical conventions, fixed here once:
//! * Gradient regularization |ξ|² → |ξ|² + δ² everywhere the flux or its
//!   Jacobian is evaluated (handles p<2 singularity and p>2 degeneracy).
//! * Boundary data is normalized to unit amplitude before Newton runs:
//!   solving for data c·f with conductivity γ is identical to solving for f
//!   with conductivity c^{2−p}γ and regularization δ/c, then scaling by c.
//!   This keeps the Newton iteration well conditioned across the extreme
//!   amplitudes the asymptotic experiments use.
//! * Dirichlet conditions are imposed by elimination, never by penalty.
//! * All assembly and accumulation loops are sequential, so a given problem
//!   reproduces bit-identically.

use std::sync::Arc;

use crate::conductivity::ConductivityField;
use crate::field::{ComplexNodalField, NodalField};
use crate::geom::{add, dot, matvec, outer, scale, Mat3, Vec3};
use crate::linalg::{pcg, sym_eigenvalues, Csr, LinalgError};
use crate::mesh::SimplicialMesh;
use crate::quadrature::{gauss_legendre_01, SimplexRule};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum PdeError {
    #[error("p must lie in (1,2)∪(2,∞), got {0}")]
    InvalidExponent(f64),
    #[error("solver option {0} must be positive")]
    InvalidOption(&'static str),
    #[error("Newton did not converge in {iterations} iterations; residual history {history:?}")]
    NonConvergence {
        iterations: usize,
        history: Vec<f64>,
    },
    #[error("line search failed to reduce the energy at iteration {iteration}")]
    LineSearchStalled { iteration: usize },
    #[error("coefficient matrix is not elliptic on cell {cell}: eigenvalue {eigenvalue:.6e}")]
    NotElliptic { cell: usize, eigenvalue: f64 },
    #[error("Dirichlet-to-Neumann pairing requires a converged solution")]
    StaleSolution,
    #[error(transparent)]
    Linear(#[from] LinalgError),
}

#[derive(Debug, Clone, Copy)]
pub struct SolverOptions {
    /// Newton stops when ‖F‖ ≤ tol·(1 + ‖F(u⁰)‖) on the normalized problem.
    pub tol: f64,
    pub max_newton: usize,
    /// Gradient regularization δ.
    pub delta: f64,
    /// Backtracking factor of the line search.
    pub backtrack: f64,
    pub lin_tol: f64,
    pub lin_max_iters: usize,
    /// Quadrature degree for cell averages of γ.
    pub quad_degree: usize,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions {
            tol: 1e-10,
            max_newton: 60,
            delta: 1e-8,
            backtrack: 0.5,
            lin_tol: 1e-12,
            lin_max_iters: 20_000,
            quad_degree: 2,
        }
    }
}

impl SolverOptions {
    pub fn validate(&self) -> Result<(), PdeError> {
        if !(self.tol > 0.0) {
            return Err(PdeError::InvalidOption("tol"));
        }
        if self.max_newton == 0 {
            return Err(PdeError::InvalidOption("max_newton"));
        }
        if !(self.delta > 0.0) {
            return Err(PdeError::InvalidOption("delta"));
        }
        if !(self.backtrack > 0.0 && self.backtrack < 1.0) {
            return Err(PdeError::InvalidOption("backtrack"));
        }
        if !(self.lin_tol > 0.0) {
            return Err(PdeError::InvalidOption("lin_tol"));
        }
        if self.lin_max_iters == 0 || self.quad_degree == 0 {
            return Err(PdeError::InvalidOption("lin_max_iters/quad_degree"));
        }
        Ok(())
    }
}

/// The nonlinear flux J(ξ) = |ξ|^{p−2}ξ with regularized modulus.
#[derive(Debug, Clone, Copy)]
pub struct FluxLaw {
    pub p: f64,
    pub delta: f64,
}

impl FluxLaw {
    pub fn new(p: f64, delta: f64) -> Result<FluxLaw, PdeError> {
        if !(p > 1.0) || p == 2.0 || !p.is_finite() {
            return Err(PdeError::InvalidExponent(p));
        }
        Ok(FluxLaw { p, delta })
    }

    fn modulus_sq(&self, g: Vec3) -> f64 {
        dot(g, g) + self.delta * self.delta
    }

    pub fn flux(&self, g: Vec3) -> Vec3 {
        scale(g, self.modulus_sq(g).powf(0.5 * (self.p - 2.0)))
    }

    /// dJ(ξ) = m·(I + (p−2) ξ⊗ξ/s) with s = |ξ|²+δ², m = s^{(p−2)/2}.
    /// Symmetric positive definite for every p > 1.
    pub fn jacobian(&self, g: Vec3) -> Mat3 {
        let s = self.modulus_sq(g);
        let m = s.powf(0.5 * (self.p - 2.0));
        let mut out = outer(g, g);
        let c = m * (self.p - 2.0) / s;
        for i in 0..3 {
            for j in 0..3 {
                out[i][j] *= c;
            }
            out[i][i] += m;
        }
        out
    }

    pub fn energy_density(&self, g: Vec3) -> f64 {
        self.modulus_sq(g).powf(0.5 * self.p) / self.p
    }
}

/// Linearized anisotropy matrix A(v) = dJ(∇v): |∇v|^{p−2}(I + (p−2)ĝ⊗ĝ).
/// For an affine v = z·x with |z| = 1 this is exactly I + (p−2)z⊗z at δ = 0.
pub fn anisotropy_from_gradient(p: f64, g: Vec3, delta: f64) -> Mat3 {
    FluxLaw { p, delta }.jacobian(g)
}

/// Per-cell A(v) for a discrete solution v.
pub fn cell_anisotropy(mesh: &SimplicialMesh, v: &[f64], p: f64, delta: f64) -> Vec<Mat3> {
    (0..mesh.n_cells())
        .map(|c| anisotropy_from_gradient(p, mesh.gradient_on_cell(v, c), delta))
        .collect()
}

/// Taylor-identity residual |J(ζ) − J(ξ) − (∫₀¹ dJ(ξ+t(ζ−ξ))dt)(ζ−ξ)| with a
/// 32-point Gauss rule in t. Zero to quadrature precision whenever the
/// segment stays away from the origin.
pub fn taylor_remainder(law: &FluxLaw, xi: Vec3, zeta: Vec3) -> f64 {
    let (nodes, weights) = gauss_legendre_01(32);
    let d = crate::geom::sub(zeta, xi);
    let mut avg = [[0.0; 3]; 3];
    for (t, w) in nodes.iter().zip(&weights) {
        let m = law.jacobian(add(xi, scale(d, *t)));
        for i in 0..3 {
            for j in 0..3 {
                avg[i][j] += w * m[i][j];
            }
        }
    }
    let lhs = crate::geom::sub(law.flux(zeta), law.flux(xi));
    let rhs = matvec(&avg, d);
    crate::geom::norm(crate::geom::sub(lhs, rhs))
}

/// Average of γ over each cell — P1 gradients are cellwise constant, so this
/// makes the γ-terms of assembly exact for the averaged coefficient.
pub fn cell_average_gamma(
    gamma: &ConductivityField,
    mesh: &SimplicialMesh,
    quad_degree: usize,
) -> Vec<Mat3> {
    let rule = SimplexRule::for_dim(mesh.dim(), quad_degree);
    let inv_ref = 1.0 / rule.reference_volume();
    (0..mesh.n_cells())
        .map(|c| {
            let mut m = [[0.0; 3]; 3];
            for (pt, &w) in rule.points.iter().zip(&rule.weights) {
                let g = gamma.eval(mesh.map_reference_point(c, *pt));
                let s = w * inv_ref;
                for i in 0..3 {
                    for j in 0..3 {
                        m[i][j] += s * g[i][j];
                    }
                }
            }
            m
        })
        .collect()
}

/// Converged forward solution with its Newton telemetry.
#[derive(Debug, Clone)]
pub struct Solution {
    pub field: NodalField,
    pub law: FluxLaw,
    pub converged: bool,
    pub iterations: usize,
    /// ‖F‖ of the normalized problem at each iterate, starting at the guess.
    pub residual_history: Vec<f64>,
    pub energy_history: Vec<f64>,
    /// Amplitude c = max|f| divided out before Newton ran.
    pub data_scale: f64,
}

/// Interior-node numbering for Dirichlet elimination.
struct Interior {
    index: Vec<Option<usize>>,
    nodes: Vec<usize>,
}

impl Interior {
    fn new(mesh: &SimplicialMesh) -> Interior {
        let mut index = vec![None; mesh.n_nodes()];
        let mut nodes = Vec::new();
        for i in 0..mesh.n_nodes() {
            if !mesh.is_boundary[i] {
                index[i] = Some(nodes.len());
                nodes.push(i);
            }
        }
        Interior { index, nodes }
    }

    fn pattern(&self, mesh: &SimplicialMesh) -> Csr {
        let mut rows: Vec<Vec<usize>> = vec![Vec::new(); self.nodes.len()];
        let nv = mesh.verts_per_cell();
        for cell in &mesh.cells {
            for a in 0..nv {
                let Some(ia) = self.index[cell[a]] else {
                    continue;
                };
                for b in 0..nv {
                    if let Some(ib) = self.index[cell[b]] {
                        rows[ia].push(ib);
                    }
                }
            }
        }
        for row in &mut rows {
            row.sort_unstable();
            row.dedup();
        }
        Csr::from_pattern(&rows)
    }
}

/// Assemble ∫∇φ_i·M∇φ_j into the interior block and fold Dirichlet columns
/// and the weak right side −∫F·∇φ into `rhs`.
fn assemble(
    mesh: &SimplicialMesh,
    interior: &Interior,
    cell_mat: &[Mat3],
    boundary_values: &[f64],
    rhs_field: Option<&[Vec3]>,
    csr: &mut Csr,
    rhs: &mut [f64],
) {
    csr.zero_data();
    rhs.fill(0.0);
    let nv = mesh.verts_per_cell();
    for (c, cell) in mesh.cells.iter().enumerate() {
        let vol = mesh.cell_volumes[c];
        let grads = &mesh.cell_grads[c];
        let m = &cell_mat[c];
        if let Some(f) = rhs_field {
            for a in 0..nv {
                if let Some(ia) = interior.index[cell[a]] {
                    rhs[ia] -= vol * dot(f[c], grads[a]);
                }
            }
        }
        for a in 0..nv {
            let mga = matvec(m, grads[a]);
            for b in a..nv {
                let k = vol * dot(mga, grads[b]);
                match (interior.index[cell[a]], interior.index[cell[b]]) {
                    (Some(ia), Some(ib)) => {
                        csr.add_to(ia, ib, k);
                        if ia != ib {
                            csr.add_to(ib, ia, k);
                        }
                    }
                    (Some(ia), None) => rhs[ia] -= k * boundary_values[cell[b]],
                    (None, Some(ib)) => rhs[ib] -= k * boundary_values[cell[a]],
                    (None, None) => {}
                }
            }
        }
    }
}

/// Interior residual F_i = ∫(γ∇u + J(∇u))·∇φ_i of the quasilinear equation.
fn residual(
    mesh: &SimplicialMesh,
    interior: &Interior,
    gamma_cell: &[Mat3],
    law: &FluxLaw,
    u: &[f64],
) -> Vec<f64> {
    let nv = mesh.verts_per_cell();
    let mut f = vec![0.0; interior.nodes.len()];
    for (c, cell) in mesh.cells.iter().enumerate() {
        let g = mesh.gradient_on_cell(u, c);
        let flux = add(matvec(&gamma_cell[c], g), law.flux(g));
        let vol = mesh.cell_volumes[c];
        let grads = &mesh.cell_grads[c];
        for a in 0..nv {
            if let Some(ia) = interior.index[cell[a]] {
                f[ia] += vol * dot(flux, grads[a]);
            }
        }
    }
    f
}

fn total_energy(mesh: &SimplicialMesh, gamma_cell: &[Mat3], law: &FluxLaw, u: &[f64]) -> f64 {
    let mut e = 0.0;
    for c in 0..mesh.n_cells() {
        let g = mesh.gradient_on_cell(u, c);
        let vol = mesh.cell_volumes[c];
        e += vol * (0.5 * dot(g, matvec(&gamma_cell[c], g)) + law.energy_density(g));
    }
    e
}

fn norm2(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Damped Newton on the normalized problem. `gamma_cell` is already scaled by
/// c^{2−p}; boundary entries of `data` have unit amplitude.
fn newton(
    mesh: &SimplicialMesh,
    interior: &Interior,
    gamma_cell: &[Mat3],
    law: &FluxLaw,
    data: &[f64],
    opts: &SolverOptions,
) -> Result<(Vec<f64>, Vec<f64>, Vec<f64>), PdeError> {
    let mut csr = interior.pattern(mesh);
    let n_int = interior.nodes.len();
    let mut rhs = vec![0.0; n_int];

    // Initial guess: (γ + I)-harmonic extension of the data. Exact for every
    // constant-coefficient linear-data contract, harmless otherwise.
    let init_mat: Vec<Mat3> = gamma_cell
        .iter()
        .map(|m| {
            let mut a = *m;
            for i in 0..3 {
                a[i][i] += 1.0;
            }
            a
        })
        .collect();
    assemble(mesh, interior, &init_mat, data, None, &mut csr, &mut rhs);
    let (u_int, _) = pcg(&csr, &rhs, None, opts.lin_tol, opts.lin_max_iters)?;
    let mut u = data.to_vec();
    for (slot, &node) in u_int.iter().zip(&interior.nodes) {
        u[node] = *slot;
    }

    let zero_bc = vec![0.0; mesh.n_nodes()];
    let mut res_history = Vec::new();
    let mut energy_history = Vec::new();
    let mut f = residual(mesh, interior, gamma_cell, law, &u);
    let mut fnorm = norm2(&f);
    let ref_norm = fnorm;
    res_history.push(fnorm);
    energy_history.push(total_energy(mesh, gamma_cell, law, &u));
    let target = opts.tol * (1.0 + ref_norm);

    for iter in 0..opts.max_newton {
        if fnorm <= target {
            return Ok((u, res_history, energy_history));
        }
        let newton_mat: Vec<Mat3> = (0..mesh.n_cells())
            .map(|c| {
                let dj = law.jacobian(mesh.gradient_on_cell(&u, c));
                let mut m = gamma_cell[c];
                for i in 0..3 {
                    for j in 0..3 {
                        m[i][j] += dj[i][j];
                    }
                }
                m
            })
            .collect();
        // The Newton step keeps the boundary fixed (d_B = 0): no rhs folding.
        assemble(mesh, interior, &newton_mat, &zero_bc, None, &mut csr, &mut rhs);
        let neg_f: Vec<f64> = f.iter().map(|x| -x).collect();
        let (d, _) = pcg(&csr, &neg_f, None, opts.lin_tol, opts.lin_max_iters)?;

        let e0 = *energy_history.last().unwrap();
        let slope: f64 = f.iter().zip(&d).map(|(fi, di)| fi * di).sum();
        // Near the minimizer the predicted decrease falls below the energy's
        // evaluation roundoff and the Armijo test goes blind; the quadratic
        // basin needs no damping, so take the plain Newton step there.
        if (1e-4 * slope).abs() <= 64.0 * f64::EPSILON * (1.0 + e0.abs()) {
            for (k, &node) in interior.nodes.iter().enumerate() {
                u[node] += d[k];
            }
            energy_history.push(total_energy(mesh, gamma_cell, law, &u));
        } else {
            let mut step = 1.0;
            let mut trial = u.clone();
            let mut accepted = false;
            for _ in 0..80 {
                trial.copy_from_slice(&u);
                for (k, &node) in interior.nodes.iter().enumerate() {
                    trial[node] += step * d[k];
                }
                let e_trial = total_energy(mesh, gamma_cell, law, &trial);
                if e_trial <= e0 + 1e-4 * step * slope {
                    u.copy_from_slice(&trial);
                    energy_history.push(e_trial);
                    accepted = true;
                    break;
                }
                step *= opts.backtrack;
            }
            if !accepted {
                return Err(PdeError::LineSearchStalled { iteration: iter + 1 });
            }
        }
        f = residual(mesh, interior, gamma_cell, law, &u);
        fnorm = norm2(&f);
        res_history.push(fnorm);
    }
    if fnorm <= target {
        return Ok((u, res_history, energy_history));
    }
    Err(PdeError::NonConvergence {
        iterations: opts.max_newton,
        history: res_history,
    })
}

fn solve_normalized(
    mesh: &Arc<SimplicialMesh>,
    gamma_cell: &[Mat3],
    p: f64,
    data: &[f64],
    opts: &SolverOptions,
) -> Result<Solution, PdeError> {
    opts.validate()?;
    let law_check = FluxLaw::new(p, opts.delta)?;
    let interior = Interior::new(mesh);
    let c = mesh
        .boundary_nodes
        .iter()
        .map(|&i| data[i].abs())
        .fold(0.0, f64::max);
    if c == 0.0 {
        let field = NodalField::zeros(mesh.clone());
        return Ok(Solution {
            field,
            law: law_check,
            converged: true,
            iterations: 0,
            residual_history: vec![0.0],
            energy_history: vec![0.0],
            data_scale: 0.0,
        });
    }
    let scaled_gamma: Vec<Mat3> = gamma_cell
        .iter()
        .map(|m| crate::geom::mat_scale(m, c.powf(2.0 - p)))
        .collect();
    let law = FluxLaw::new(p, opts.delta / c)?;
    let data_n: Vec<f64> = data.iter().map(|v| v / c).collect();
    let (w, res_history, energy_history) =
        newton(mesh, &interior, &scaled_gamma, &law, &data_n, opts)?;
    let u: Vec<f64> = w.iter().map(|v| v * c).collect();
    let iterations = res_history.len() - 1;
    Ok(Solution {
        field: NodalField::new(mesh.clone(), u).expect("sized by construction"),
        law: law_check,
        converged: true,
        iterations,
        residual_history: res_history,
        energy_history,
        data_scale: c,
    })
}

/// Solve ∇·(γ∇u + J(∇u)) = 0 with Dirichlet data read from the boundary
/// entries of `data`.
pub fn solve_quasilinear(
    gamma: &ConductivityField,
    mesh: &Arc<SimplicialMesh>,
    p: f64,
    data: &[f64],
    opts: &SolverOptions,
) -> Result<Solution, PdeError> {
    let gamma_cell = cell_average_gamma(gamma, mesh, opts.quad_degree);
    solve_normalized(mesh, &gamma_cell, p, data, opts)
}

/// p-Laplace solve: the γ-term is absent.
pub fn solve_p_laplace(
    mesh: &Arc<SimplicialMesh>,
    p: f64,
    data: &[f64],
    opts: &SolverOptions,
) -> Result<Solution, PdeError> {
    let zeros = vec![[[0.0; 3]; 3]; mesh.n_cells()];
    solve_normalized(mesh, &zeros, p, data, opts)
}

fn check_cellwise_elliptic(mesh: &SimplicialMesh, a_cell: &[Mat3]) -> Result<(), PdeError> {
    for (c, m) in a_cell.iter().enumerate() {
        let ev = sym_eigenvalues(m, mesh.dim());
        if ev[0] <= 0.0 {
            return Err(PdeError::NotElliptic {
                cell: c,
                eigenvalue: ev[0],
            });
        }
    }
    Ok(())
}

/// Weak solution of ∫A∇V·∇φ = −∫F·∇φ with Dirichlet data. Returns the field
/// and the CG iteration count.
pub fn solve_linear_anisotropic(
    mesh: &Arc<SimplicialMesh>,
    a_cell: &[Mat3],
    rhs_field: Option<&[Vec3]>,
    data: &[f64],
    opts: &SolverOptions,
) -> Result<(NodalField, usize), PdeError> {
    opts.validate()?;
    check_cellwise_elliptic(mesh, a_cell)?;
    let interior = Interior::new(mesh);
    let mut csr = interior.pattern(mesh);
    let mut rhs = vec![0.0; interior.nodes.len()];
    assemble(mesh, &interior, a_cell, data, rhs_field, &mut csr, &mut rhs);
    let (v_int, iters) = pcg(&csr, &rhs, None, opts.lin_tol, opts.lin_max_iters)?;
    let mut v = data.to_vec();
    for (&node, &val) in interior.nodes.iter().zip(&v_int) {
        v[node] = val;
    }
    Ok((
        NodalField::new(mesh.clone(), v).expect("sized by construction"),
        iters,
    ))
}

/// Complex data / right side by linearity: one assembly, two real solves.
pub fn solve_linear_anisotropic_complex(
    mesh: &Arc<SimplicialMesh>,
    a_cell: &[Mat3],
    rhs_field: Option<&[crate::geom::CVec3]>,
    data_re: &[f64],
    data_im: &[f64],
    opts: &SolverOptions,
) -> Result<ComplexNodalField, PdeError> {
    opts.validate()?;
    check_cellwise_elliptic(mesh, a_cell)?;
    let interior = Interior::new(mesh);
    let mut csr = interior.pattern(mesh);
    let mut rhs = vec![0.0; interior.nodes.len()];
    let mut solve_part = |data: &[f64], f: Option<Vec<Vec3>>| -> Result<Vec<f64>, PdeError> {
        assemble(
            mesh,
            &interior,
            a_cell,
            data,
            f.as_deref(),
            &mut csr,
            &mut rhs,
        );
        let (v_int, _) = pcg(&csr, &rhs, None, opts.lin_tol, opts.lin_max_iters)?;
        let mut v = data.to_vec();
        for (&node, &val) in interior.nodes.iter().zip(&v_int) {
            v[node] = val;
        }
        Ok(v)
    };
    let re_field = rhs_field.map(|f| f.iter().map(|v| [v[0].re, v[1].re, v[2].re]).collect());
    let im_field = rhs_field.map(|f| f.iter().map(|v| [v[0].im, v[1].im, v[2].im]).collect());
    let re = solve_part(data_re, re_field)?;
    let im = solve_part(data_im, im_field)?;
    Ok(ComplexNodalField {
        re: NodalField::new(mesh.clone(), re).expect("sized by construction"),
        im: NodalField::new(mesh.clone(), im).expect("sized by construction"),
    })
}

/// Harmonic extension of boundary values (A = I), the default DtN extension.
pub fn harmonic_extension(
    mesh: &Arc<SimplicialMesh>,
    trace: &[f64],
    opts: &SolverOptions,
) -> Result<NodalField, PdeError> {
    let eye = vec![crate::geom::identity(); mesh.n_cells()];
    Ok(solve_linear_anisotropic(mesh, &eye, None, trace, opts)?.0)
}

/// ⟨Λ_γ(f), w⟩ = ∫(γ∇u + J(∇u))·∇W against an explicit extension W of w.
/// The value is extension-independent up to the solver residual.
pub fn dtn_pair_with_extension(
    mesh: &SimplicialMesh,
    gamma_cell: &[Mat3],
    u: &Solution,
    extension: &[f64],
) -> Result<f64, PdeError> {
    if !u.converged {
        return Err(PdeError::StaleSolution);
    }
    let vals = &u.field.values;
    let mut acc = 0.0;
    for c in 0..mesh.n_cells() {
        let g = mesh.gradient_on_cell(vals, c);
        let flux = add(matvec(&gamma_cell[c], g), u.law.flux(g));
        let gw = mesh.gradient_on_cell(extension, c);
        acc += mesh.cell_volumes[c] * dot(flux, gw);
    }
    Ok(acc)
}

/// DtN pairing with the default harmonic extension of `w_trace`.
pub fn dtn_pair(
    mesh: &Arc<SimplicialMesh>,
    gamma_cell: &[Mat3],
    u: &Solution,
    w_trace: &[f64],
    opts: &SolverOptions,
) -> Result<f64, PdeError> {
    let w = harmonic_extension(mesh, w_trace, opts)?;
    dtn_pair_with_extension(mesh, gamma_cell, u, &w.values)
}

/// ⟨Λ₀(f), w⟩ for the p-Laplace flow: ∫J(∇v)·∇W.
pub fn dtn_p_laplace(
    mesh: &Arc<SimplicialMesh>,
    v: &Solution,
    w_trace: &[f64],
    opts: &SolverOptions,
) -> Result<f64, PdeError> {
    let zeros = vec![[[0.0; 3]; 3]; mesh.n_cells()];
    dtn_pair(mesh, &zeros, v, w_trace, opts)
}

/// ⟨Λ₀(c·f), w⟩ evaluated by (p−1)-homogeneity of the flux, without
/// re-solving: J(c∇v) = c^{p−1}J(∇v) up to the δ-regularization bias.
pub fn dtn_p_laplace_scaled(
    mesh: &Arc<SimplicialMesh>,
    v: &Solution,
    c: f64,
    w_trace: &[f64],
    opts: &SolverOptions,
) -> Result<f64, PdeError> {
    Ok(c.powf(v.law.p - 1.0) * dtn_p_laplace(mesh, v, w_trace, opts)?)
}

/// Interpolate a closed-form function onto every node (boundary data and
/// exact-solution comparisons both read from this).
pub fn nodal_values(mesh: &SimplicialMesh, f: impl Fn(Vec3) -> f64) -> Vec<f64> {
    mesh.nodes.iter().map(|&x| f(x)).collect()
}
