//! Amplitude-linearization experiments for the quasilinear flow.
//!
//! Two perturbation regimes probe the same limiting equation. For p < 2 the
//! data is a small multiple εv of a p-harmonic base and the solution is
//! written u_ε = εv + ε^{3−p}R_ε; for p > 2 the data is the large multiple
//! ε⁻¹v and u_ε = ε⁻¹v + ε^{p−3}R̃_ε. In both cases the remainder converges
//! (after the branch scaling above) to the solution R of the linear
//! anisotropic problem
//!
//! ```text
//!   ∇·(A(v)∇R) = −∇·(γ∇v),   R|∂Ω = 0,   A(v) = |∇v|^{p−2}(I + (p−2)ĝ⊗ĝ),
//! ```
//!
//! and the first-order correction to the boundary pairing is the volume
//! integral ∫(γ∇v + A(v)∇R)·∇W. The τ-family probes the Fréchet derivative
//! of the p-harmonic solution map: v_τ has boundary data φ₀ + τφ₁ and the
//! central quotients (v_τ − v_{−τ})/2τ converge to the solution V of
//! ∇·(A(v₀)∇V) = 0 with V|∂Ω = φ₁.
//!
//! Numerical conventions:
//! * the discrete C¹ proxy norm is max nodal |value| + max cellwise
//!   |gradient| ([`NodalField::c1_norm`]);
//! * schedules are decreasing positive lists; dyadic ε and halved τ defaults
//!   keep the forward solves well-conditioned while the trend is visible;
//! * limits are reported both raw (smallest schedule entry) and through the
//!   power-law fit value(ε) = c₀ + c₁ε^q with q estimated from the three
//!   smallest entries ([`extrapolate_schedule`]);
//! * per-ε and per-τ solves run in parallel; tables are assembled in
//!   schedule order so reruns are bytewise reproducible.

use std::sync::Arc;

use rayon::prelude::*;
use thiserror::Error;

use crate::conductivity::ConductivityField;
use crate::field::NodalField;
use crate::geom::{dot, matvec, norm, Vec3};
use crate::mesh::SimplicialMesh;
use crate::pde::{
    anisotropy_from_gradient, cell_average_gamma, dtn_pair_with_extension, harmonic_extension,
    solve_linear_anisotropic, solve_p_laplace, solve_quasilinear, PdeError, Solution,
    SolverOptions,
};

/// Cells with |∇v| at or below this are treated as critical points of the
/// base solution; every operation here assumes none exist.
const GRADIENT_FLOOR: f64 = 1e-12;

#[derive(Debug, Error)]
pub enum AsymptoticsError {
    #[error("base solution gradient vanishes on cell {cell} (|∇v| = {norm:.3e})")]
    DegenerateGradient { cell: usize, norm: f64 },
    #[error("schedule must be strictly decreasing inside (0, 1), got {0:?}")]
    BadSchedule(Vec<f64>),
    #[error("forward solve at ε = {eps:.6e} failed: {source}")]
    Forward {
        eps: f64,
        #[source]
        source: Box<PdeError>,
    },
    #[error(transparent)]
    Pde(#[from] PdeError),
}

/// Which side of p = 2 the experiment runs on: `Small` scales the data down
/// (εv), `Large` scales it up (ε⁻¹v).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Branch {
    Small,
    Large,
}

impl Branch {
    pub fn for_exponent(p: f64) -> Branch {
        if p < 2.0 {
            Branch::Small
        } else {
            Branch::Large
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Branch::Small => "small",
            Branch::Large => "large",
        }
    }
}

/// Default dyadic amplitude schedule {2⁻³, …, 2⁻⁶}.
pub fn default_eps_schedule() -> Vec<f64> {
    vec![0.125, 0.0625, 0.03125, 0.015625]
}

/// Default τ schedule for the Fréchet quotients.
pub fn default_tau_schedule() -> Vec<f64> {
    vec![4e-2, 2e-2, 1e-2]
}

fn validate_schedule(list: &[f64]) -> Result<(), AsymptoticsError> {
    let ok = !list.is_empty()
        && list.iter().all(|&e| e > 0.0 && e < 1.0 && e.is_finite())
        && list.windows(2).all(|w| w[0] > w[1]);
    if ok {
        Ok(())
    } else {
        Err(AsymptoticsError::BadSchedule(list.to_vec()))
    }
}

/// Cell gradients of the base solution, rejecting critical cells.
fn nondegenerate_gradients(
    mesh: &SimplicialMesh,
    v: &[f64],
) -> Result<Vec<Vec3>, AsymptoticsError> {
    (0..mesh.n_cells())
        .map(|c| {
            let g = mesh.gradient_on_cell(v, c);
            let n = norm(g);
            if n <= GRADIENT_FLOOR {
                Err(AsymptoticsError::DegenerateGradient { cell: c, norm: n })
            } else {
                Ok(g)
            }
        })
        .collect()
}

/// Limiting remainder: solves ∇·(A(v)∇R) = −∇·(γ∇v) weakly with R = 0 on the
/// boundary. The right side is assembled from the cell averages of γ, so for
/// constant γ it is weakly zero and R vanishes to solver tolerance.
pub fn solve_remainder_limit(
    gamma: &ConductivityField,
    mesh: &Arc<SimplicialMesh>,
    p: f64,
    v: &[f64],
    opts: &SolverOptions,
) -> Result<NodalField, AsymptoticsError> {
    let grads = nondegenerate_gradients(mesh, v)?;
    let a_cell: Vec<_> = grads
        .iter()
        .map(|&g| anisotropy_from_gradient(p, g, 0.0))
        .collect();
    let gamma_cell = cell_average_gamma(gamma, mesh, opts.quad_degree);
    let rhs: Vec<Vec3> = grads
        .iter()
        .zip(&gamma_cell)
        .map(|(&g, m)| matvec(m, g))
        .collect();
    let zero_bc = vec![0.0; mesh.n_nodes()];
    let (field, _) = solve_linear_anisotropic(mesh, &a_cell, Some(&rhs), &zero_bc, opts)?;
    Ok(field)
}

/// One row of an [`EpsilonExperiment`].
#[derive(Debug, Clone)]
pub struct EpsilonRecord {
    pub eps: f64,
    /// Forward solution u_ε (with its Newton telemetry).
    pub solution: Solution,
    /// Remainder recovered from the branch Ansatz.
    pub remainder: NodalField,
    /// C¹ proxy norm of ε^{2−p}R_ε (small branch) resp. ε^{p−2}R̃_ε (large).
    pub scaled_remainder_norm: f64,
    /// C¹ proxy norm of R_ε − R against the limiting remainder.
    pub deviation_norm: f64,
    /// max |u_ε − (data term) − (scaled remainder)|; pure bookkeeping, only
    /// rounding in the powers can make it nonzero.
    pub ansatz_defect: f64,
}

/// Forward solves along an amplitude schedule together with the remainders
/// the Ansatz assigns to them and the limiting remainder they approach.
#[derive(Debug, Clone)]
pub struct EpsilonExperiment {
    pub branch: Branch,
    pub p: f64,
    pub eps_list: Vec<f64>,
    /// Base p-harmonic field v (critical-point-free).
    pub base: NodalField,
    /// R from [`solve_remainder_limit`].
    pub limit: NodalField,
    /// C¹ proxy norm of the limit, for relative deviations.
    pub limit_norm: f64,
    pub records: Vec<EpsilonRecord>,
}

/// Runs the branch experiment for the exponent's side of 2: data εv below,
/// ε⁻¹v above. Solves run in parallel; the table keeps schedule order.
pub fn run_epsilon_experiment(
    gamma: &ConductivityField,
    mesh: &Arc<SimplicialMesh>,
    p: f64,
    v: &[f64],
    eps_list: &[f64],
    opts: &SolverOptions,
) -> Result<EpsilonExperiment, AsymptoticsError> {
    validate_schedule(eps_list)?;
    let branch = Branch::for_exponent(p);
    let limit = solve_remainder_limit(gamma, mesh, p, v, opts)?;
    let limit_norm = limit.c1_norm();
    let base = NodalField::new(mesh.clone(), v.to_vec()).map_err(|_| {
        AsymptoticsError::Pde(PdeError::InvalidOption(
            "base field does not match the mesh".into(),
        ))
    })?;

    let solved: Vec<Result<Solution, AsymptoticsError>> = eps_list
        .par_iter()
        .map(|&eps| {
            let amp = match branch {
                Branch::Small => eps,
                Branch::Large => 1.0 / eps,
            };
            let data: Vec<f64> = v.iter().map(|x| amp * x).collect();
            solve_quasilinear(gamma, mesh, p, &data, opts).map_err(|e| {
                AsymptoticsError::Forward {
                    eps,
                    source: Box::new(e),
                }
            })
        })
        .collect();

    let mut records = Vec::with_capacity(eps_list.len());
    for (&eps, sol) in eps_list.iter().zip(solved) {
        let sol = sol?;
        let (amp, rem_power, scale_power) = match branch {
            Branch::Small => (eps, p - 3.0, -1.0),
            Branch::Large => (1.0 / eps, 3.0 - p, 1.0),
        };
        // diff = u_ε minus the data term of the Ansatz.
        let diff = sol.field.axpy(-amp, &base);
        let remainder = diff.scaled(eps.powf(rem_power));
        let scaled_remainder_norm = diff.scaled(eps.powf(scale_power)).c1_norm();
        let deviation_norm = remainder.axpy(-1.0, &limit).c1_norm();
        let back = eps.powf(-rem_power);
        let ansatz_defect = diff
            .values
            .iter()
            .zip(&remainder.values)
            .map(|(d, r)| (d - back * r).abs())
            .fold(0.0, f64::max);
        records.push(EpsilonRecord {
            eps,
            solution: sol,
            remainder,
            scaled_remainder_norm,
            deviation_norm,
            ansatz_defect,
        });
    }

    Ok(EpsilonExperiment {
        branch,
        p,
        eps_list: eps_list.to_vec(),
        base,
        limit,
        limit_norm,
        records,
    })
}

/// Power-law tail model value(x) = c₀ + c₁x^q.
#[derive(Debug, Clone, Copy)]
pub struct PowerFit {
    pub c0: f64,
    pub c1: f64,
    pub q: f64,
}

/// Limit estimate from a decreasing schedule of values.
#[derive(Debug, Clone)]
pub struct Extrapolation {
    pub value: f64,
    pub fit: Option<PowerFit>,
    pub warning: Option<String>,
}

/// Fits value(x) = c₀ + c₁x^q through three points with x₁ > x₂ > x₃ > 0.
/// The exponent solves (v₁−v₂)/(v₂−v₃) = (x₁^q−x₂^q)/(x₂^q−x₃^q), which is
/// strictly increasing in q, by bisection on q ∈ [1e−3, 32].
pub fn fit_power_limit(xs: [f64; 3], vs: [f64; 3]) -> Option<PowerFit> {
    let [a, b, c] = xs;
    if !(a > b && b > c && c > 0.0) {
        return None;
    }
    let d1 = vs[0] - vs[1];
    let d2 = vs[1] - vs[2];
    if d1 * d2 <= 0.0 || d2.abs() >= d1.abs() {
        return None;
    }
    let ratio = d1 / d2;
    let h = |q: f64| (a.powf(q) - b.powf(q)) / (b.powf(q) - c.powf(q));
    let (mut lo, mut hi) = (1e-3, 32.0);
    if h(lo) >= ratio || h(hi) <= ratio {
        return None;
    }
    for _ in 0..128 {
        let mid = 0.5 * (lo + hi);
        if h(mid) < ratio {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let q = 0.5 * (lo + hi);
    let c1 = d2 / (b.powf(q) - c.powf(q));
    let c0 = vs[2] - c1 * c.powf(q);
    Some(PowerFit { c0, c1, q })
}

/// Extrapolates a decreasing schedule to x → 0 with [`fit_power_limit`] on
/// the three smallest entries. Tails that are too short, already converged,
/// non-monotone, or non-contracting fall back to the smallest-x value; only
/// the last two cases carry a warning.
pub fn extrapolate_schedule(xs: &[f64], vals: &[f64]) -> Extrapolation {
    assert_eq!(xs.len(), vals.len(), "schedule and values must align");
    let n = xs.len();
    if n == 0 {
        return Extrapolation {
            value: f64::NAN,
            fit: None,
            warning: Some("empty schedule".into()),
        };
    }
    let last = vals[n - 1];
    if n < 3 {
        return Extrapolation {
            value: last,
            fit: None,
            warning: Some("fewer than three schedule points; extrapolation skipped".into()),
        };
    }
    let d1 = vals[n - 3] - vals[n - 2];
    let d2 = vals[n - 2] - vals[n - 1];
    let floor = 1e-12 * (1.0 + last.abs());
    if d1.abs() <= floor && d2.abs() <= floor {
        // Sequence already flat to rounding: the limit is the tail itself.
        return Extrapolation {
            value: last,
            fit: None,
            warning: None,
        };
    }
    if d1 * d2 <= 0.0 {
        return Extrapolation {
            value: last,
            fit: None,
            warning: Some(
                "tail increments change sign; extrapolation unreliable, reporting the smallest-x value"
                    .into(),
            ),
        };
    }
    if d2.abs() >= d1.abs() {
        return Extrapolation {
            value: last,
            fit: None,
            warning: Some(
                "tail increments are not contracting; extrapolation unreliable, reporting the smallest-x value"
                    .into(),
            ),
        };
    }
    match fit_power_limit([xs[n - 3], xs[n - 2], xs[n - 1]], [vals[n - 3], vals[n - 2], last]) {
        Some(fit) => Extrapolation {
            value: fit.c0,
            fit: Some(fit),
            warning: None,
        },
        None => Extrapolation {
            value: last,
            fit: None,
            warning: Some(
                "power-law fit found no admissible exponent; reporting the smallest-x value".into(),
            ),
        },
    }
}

/// First-order boundary correction extracted from an amplitude schedule.
#[derive(Debug, Clone)]
pub struct DtnCorrection {
    pub branch: Branch,
    pub p: f64,
    pub eps_list: Vec<f64>,
    /// Difference quotient of the pairings at each ε.
    pub quotients: Vec<f64>,
    /// Limit estimate for the quotients (see [`extrapolate_schedule`]).
    pub extrapolated: f64,
    pub fit: Option<PowerFit>,
    /// Volume-integral value ∫(γ∇v + A(v)∇R)·∇W of the same correction.
    pub oracle: f64,
    pub warning: Option<String>,
}

/// Difference quotients of the boundary pairings against an existing
/// experiment's forward solves, plus the volume-integral oracle.
///
/// Small branch: quotient(ε) = ε⁻¹(⟨Λ_γ(εv), w⟩ − ⟨Λ₀(εv), w⟩); large
/// branch: quotient(ε) = ε(⟨Λ_γ(ε⁻¹v), w⟩ − ⟨Λ₀(ε⁻¹v), w⟩). The p-Laplace
/// term is evaluated once at amplitude 1 and rescaled by (p−1)-homogeneity.
pub fn dtn_correction_from(
    gamma: &ConductivityField,
    exp: &EpsilonExperiment,
    w_trace: &[f64],
    opts: &SolverOptions,
) -> Result<DtnCorrection, AsymptoticsError> {
    let mesh = &exp.base.mesh;
    let gamma_cell = cell_average_gamma(gamma, mesh, opts.quad_degree);
    let w = harmonic_extension(mesh, w_trace, opts)?;

    let zero_cells = vec![[[0.0; 3]; 3]; mesh.n_cells()];
    let base_p = solve_p_laplace(mesh, exp.p, &exp.base.values, opts)?;
    let lambda0 = dtn_pair_with_extension(mesh, &zero_cells, &base_p, &w.values)?;

    let mut quotients = Vec::with_capacity(exp.records.len());
    for rec in &exp.records {
        let eps = rec.eps;
        let lambda_gamma =
            dtn_pair_with_extension(mesh, &gamma_cell, &rec.solution, &w.values)?;
        let q = match exp.branch {
            Branch::Small => (lambda_gamma - eps.powf(exp.p - 1.0) * lambda0) / eps,
            Branch::Large => eps * (lambda_gamma - eps.powf(1.0 - exp.p) * lambda0),
        };
        quotients.push(q);
    }

    // Volume-integral form of the same limit, using the discrete v and R.
    let grads = nondegenerate_gradients(mesh, &exp.base.values)?;
    let mut oracle = 0.0;
    for c in 0..mesh.n_cells() {
        let g = grads[c];
        let a = anisotropy_from_gradient(exp.p, g, 0.0);
        let flux = crate::geom::add(
            matvec(&gamma_cell[c], g),
            matvec(&a, mesh.gradient_on_cell(&exp.limit.values, c)),
        );
        let gw = mesh.gradient_on_cell(&w.values, c);
        oracle += mesh.cell_volumes[c] * dot(flux, gw);
    }

    let tail = extrapolate_schedule(&exp.eps_list, &quotients);
    Ok(DtnCorrection {
        branch: exp.branch,
        p: exp.p,
        eps_list: exp.eps_list.clone(),
        quotients,
        extrapolated: tail.value,
        fit: tail.fit,
        oracle,
        warning: tail.warning,
    })
}

/// Convenience wrapper: run the ε-experiment, then form the correction.
pub fn dtn_correction(
    gamma: &ConductivityField,
    mesh: &Arc<SimplicialMesh>,
    p: f64,
    v: &[f64],
    w_trace: &[f64],
    eps_list: &[f64],
    opts: &SolverOptions,
) -> Result<DtnCorrection, AsymptoticsError> {
    let exp = run_epsilon_experiment(gamma, mesh, p, v, eps_list, opts)?;
    dtn_correction_from(gamma, &exp, w_trace, opts)
}

/// One τ row: the central quotient and its distance to the linearization.
#[derive(Debug, Clone)]
pub struct TauRecord {
    pub tau: f64,
    /// (v_τ − v_{−τ}) / 2τ.
    pub quotient: NodalField,
    /// C¹ proxy norm of quotient − V.
    pub error: f64,
    /// ln(e_prev/e)/ln(τ_prev/τ) against the previous row.
    pub observed_order: Option<f64>,
}

/// Central difference quotients of the p-harmonic solution map against the
/// linearized solution V.
#[derive(Debug, Clone)]
pub struct TauExperiment {
    pub p: f64,
    pub phi0: Vec<f64>,
    pub phi1: Vec<f64>,
    pub tau_list: Vec<f64>,
    /// V solving ∇·(A(v₀)∇V) = 0 with V|∂Ω = φ₁.
    pub linearized: NodalField,
    pub records: Vec<TauRecord>,
}

/// Fréchet-derivative check for the p-harmonic solution map at base data φ₀
/// in direction φ₁: solves v_{±τ} for each τ in the schedule (in parallel),
/// forms central quotients, and compares to the linearized solution.
pub fn frechet_check(
    mesh: &Arc<SimplicialMesh>,
    p: f64,
    phi0: &[f64],
    phi1: &[f64],
    tau_list: &[f64],
    opts: &SolverOptions,
) -> Result<TauExperiment, AsymptoticsError> {
    validate_schedule(tau_list)?;
    let v0 = solve_p_laplace(mesh, p, phi0, opts)?;
    let grads = nondegenerate_gradients(mesh, &v0.field.values)?;
    let a_cell: Vec<_> = grads
        .iter()
        .map(|&g| anisotropy_from_gradient(p, g, 0.0))
        .collect();
    let (linearized, _) = solve_linear_anisotropic(mesh, &a_cell, None, phi1, opts)?;

    let solved: Vec<Result<NodalField, AsymptoticsError>> = tau_list
        .par_iter()
        .map(|&tau| {
            let solve_at = |t: f64| -> Result<Solution, AsymptoticsError> {
                let data: Vec<f64> = phi0
                    .iter()
                    .zip(phi1)
                    .map(|(a, b)| a + t * b)
                    .collect();
                solve_p_laplace(mesh, p, &data, opts).map_err(AsymptoticsError::Pde)
            };
            let plus = solve_at(tau)?;
            let minus = solve_at(-tau)?;
            Ok(plus.field.axpy(-1.0, &minus.field).scaled(0.5 / tau))
        })
        .collect();

    let mut records: Vec<TauRecord> = Vec::with_capacity(tau_list.len());
    for (&tau, quotient) in tau_list.iter().zip(solved) {
        let quotient = quotient?;
        let error = quotient.axpy(-1.0, &linearized).c1_norm();
        let observed_order = records.last().and_then(|prev| {
            (prev.error > 0.0 && error > 0.0)
                .then(|| (prev.error / error).ln() / (prev.tau / tau).ln())
        });
        records.push(TauRecord {
            tau,
            quotient,
            error,
            observed_order,
        });
    }

    Ok(TauExperiment {
        p,
        phi0: phi0.to_vec(),
        phi1: phi1.to_vec(),
        tau_list: tau_list.to_vec(),
        linearized,
        records,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::conductivity::{gamma_preset, GammaParams};
    use crate::mesh::BoxDomain;
    use crate::pde::nodal_values;
    use proptest::prelude::*;

    fn unit_mesh(n: usize) -> Arc<SimplicialMesh> {
        Arc::new(SimplicialMesh::build(&BoxDomain::unit_cube(), n).unwrap())
    }

    fn aniso_params() -> GammaParams {
        GammaParams {
            matrix: Some([[2.0, 0.3, 0.0], [0.3, 1.2, 0.1], [0.0, 0.1, 1.0]]),
            ..GammaParams::default()
        }
    }

    #[test]
    fn power_fit_recovers_a_synthetic_decay() {
        let xs = [0.125, 0.0625, 0.03125];
        let model = |x: f64| 3.0 + 2.0 * x.powf(1.7);
        let fit = fit_power_limit(xs, [model(xs[0]), model(xs[1]), model(xs[2])]).unwrap();
        assert!((fit.q - 1.7).abs() < 1e-9, "q = {}", fit.q);
        assert!((fit.c0 - 3.0).abs() < 1e-11, "c0 = {}", fit.c0);
        assert!((fit.c1 - 2.0).abs() < 1e-8, "c1 = {}", fit.c1);
    }

    #[test]
    fn extrapolation_flags_a_non_monotone_tail() {
        let out = extrapolate_schedule(&[0.125, 0.0625, 0.03125], &[1.0, 0.5, 0.7]);
        assert_eq!(out.value, 0.7);
        assert!(out.fit.is_none());
        assert!(out.warning.unwrap().contains("change sign"));
    }

    #[test]
    fn extrapolation_accepts_a_flat_tail_without_warning() {
        let out = extrapolate_schedule(&[0.25, 0.125, 0.0625, 0.03125], &[2.0; 4]);
        assert_eq!(out.value, 2.0);
        assert!(out.warning.is_none());
    }

    #[test]
    fn schedules_must_decrease_inside_the_unit_interval() {
        let mesh = unit_mesh(3);
        let gamma = gamma_preset("constant-iso", &GammaParams::default(), &mesh).unwrap();
        let v = nodal_values(&mesh, |x| x[0]);
        let opts = SolverOptions::default();
        for bad in [vec![], vec![0.5, 0.5], vec![0.25, 0.5], vec![1.5, 0.5]] {
            let err = run_epsilon_experiment(&gamma, &mesh, 1.5, &v, &bad, &opts);
            assert!(matches!(err, Err(AsymptoticsError::BadSchedule(_))));
        }
    }

    #[test]
    fn constant_base_is_rejected_as_degenerate() {
        let mesh = unit_mesh(3);
        let gamma = gamma_preset("constant-iso", &GammaParams::default(), &mesh).unwrap();
        let v = vec![1.0; mesh.n_nodes()];
        let err = solve_remainder_limit(&gamma, &mesh, 3.0, &v, &SolverOptions::default());
        match err {
            Err(AsymptoticsError::DegenerateGradient { norm, .. }) => {
                assert!(norm <= GRADIENT_FLOOR)
            }
            other => panic!("expected degenerate-gradient error, got {other:?}"),
        }
    }

    #[test]
    fn remainder_limit_vanishes_for_constant_gamma() {
        let mesh = unit_mesh(7);
        let gamma = gamma_preset("constant-aniso", &aniso_params(), &mesh).unwrap();
        let v = nodal_values(&mesh, |x| 0.6 * x[0] - 0.8 * x[1] + 0.2 * x[2]);
        let r = solve_remainder_limit(&gamma, &mesh, 1.5, &v, &SolverOptions::default()).unwrap();
        assert!(r.c1_norm() < 1e-10, "‖R‖ = {}", r.c1_norm());
    }

    #[test]
    fn remainder_limit_is_additive_in_gamma() {
        let mesh = unit_mesh(7);
        let opts = SolverOptions::default();
        let v = nodal_values(&mesh, |x| x[0]);
        let part = |base_scale: f64, amplitude: f64| {
            let params = GammaParams {
                value: base_scale,
                amplitude,
                ..GammaParams::default()
            };
            gamma_preset("bump-iso", &params, &mesh).unwrap()
        };
        let r1 = solve_remainder_limit(&part(1.0, 0.05), &mesh, 3.0, &v, &opts).unwrap();
        let r2 = solve_remainder_limit(&part(0.5, 0.03), &mesh, 3.0, &v, &opts).unwrap();
        let r_sum = solve_remainder_limit(&part(1.5, 0.08), &mesh, 3.0, &v, &opts).unwrap();
        let gap = r_sum.axpy(-1.0, &r1).axpy(-1.0, &r2).c1_norm();
        assert!(gap < 1e-9, "R(γ₁+γ₂) − R(γ₁) − R(γ₂) = {gap:.3e}");
    }

    #[test]
    fn remainder_limit_self_converges_under_refinement() {
        // Bump wide enough for the coarsest grid to resolve it.
        let params = GammaParams {
            width: 0.4,
            ..GammaParams::default()
        };
        let opts = SolverOptions::default();
        let solve_on = |n: usize| {
            let mesh = unit_mesh(n);
            let gamma = gamma_preset("bump-iso", &params, &mesh).unwrap();
            let v = nodal_values(&mesh, |x| x[0]);
            solve_remainder_limit(&gamma, &mesh, 3.0, &v, &opts).unwrap()
        };
        let (r9, r17, r33) = (solve_on(9), solve_on(17), solve_on(33));
        let gap = |coarse: &NodalField, fine: &NodalField, nc: usize| {
            let nf = 2 * nc - 1;
            let mut worst = 0.0f64;
            for iz in 0..nc {
                for iy in 0..nc {
                    for ix in 0..nc {
                        let c = ix + nc * (iy + nc * iz);
                        let f = 2 * ix + nf * (2 * iy + nf * (2 * iz));
                        worst = worst.max((coarse.values[c] - fine.values[f]).abs());
                    }
                }
            }
            worst
        };
        let e_coarse = gap(&r9, &r17, 9);
        let e_fine = gap(&r17, &r33, 17);
        let ratio = e_coarse / e_fine;
        assert!(
            ratio > 3.0,
            "refinement ratio {ratio:.2} (gaps {e_coarse:.3e} → {e_fine:.3e})"
        );
    }

    #[test]
    fn linear_base_with_constant_gamma_has_vanishing_remainders() {
        let mesh = unit_mesh(9);
        let gamma = gamma_preset("constant-aniso", &aniso_params(), &mesh).unwrap();
        let v = nodal_values(&mesh, |x| 0.6 * x[0] - 0.8 * x[1] + 0.2 * x[2]);
        let opts = SolverOptions::default();
        for p in [1.5, 3.0] {
            let exp =
                run_epsilon_experiment(&gamma, &mesh, p, &v, &default_eps_schedule(), &opts)
                    .unwrap();
            assert_eq!(exp.branch, Branch::for_exponent(p));
            for rec in &exp.records {
                assert!(
                    rec.scaled_remainder_norm < 1e-7,
                    "p = {p}, ε = {}: scaled remainder {:.3e}",
                    rec.eps,
                    rec.scaled_remainder_norm
                );
                assert!(rec.deviation_norm < 1e-7);
                assert!(rec.ansatz_defect < 1e-12 * (1.0 + rec.solution.field.max_abs()));
            }
        }
    }

    #[test]
    fn correction_quotients_match_the_constant_flux() {
        let mesh = unit_mesh(9);
        let gamma = gamma_preset("constant-aniso", &aniso_params(), &mesh).unwrap();
        let z = [0.6, -0.8, 0.2];
        let v = nodal_values(&mesh, |x| dot(z, x));
        let w = nodal_values(&mesh, |x| x[0]);
        let opts = SolverOptions::default();
        // W extends to x₁ exactly, so the correction is (γz)·e₁ by inspection.
        let expected = matvec(&aniso_params().matrix.unwrap(), z)[0];
        for p in [1.5, 3.0] {
            let out =
                dtn_correction(&gamma, &mesh, p, &v, &w, &default_eps_schedule(), &opts).unwrap();
            assert!((out.oracle - expected).abs() < 1e-9, "oracle {}", out.oracle);
            for (&eps, &q) in out.eps_list.iter().zip(&out.quotients) {
                assert!(
                    (q - expected).abs() < 1e-6,
                    "p = {p}, ε = {eps}: quotient {q} vs {expected}"
                );
            }
            assert!((out.extrapolated - expected).abs() < 1e-6);
        }
    }

    #[test]
    fn correction_is_additive_in_the_test_function() {
        let mesh = unit_mesh(7);
        let gamma = gamma_preset("bump-iso", &GammaParams::default(), &mesh).unwrap();
        let v = nodal_values(&mesh, |x| x[0]);
        let w1 = nodal_values(&mesh, |x| x[1]);
        let w2 = nodal_values(&mesh, |x| x[0] * x[2]);
        let w12: Vec<f64> = w1.iter().zip(&w2).map(|(a, b)| a + b).collect();
        let opts = SolverOptions::default();
        let exp = run_epsilon_experiment(&gamma, &mesh, 3.0, &v, &[0.125], &opts).unwrap();
        let q = |w: &[f64]| {
            dtn_correction_from(&gamma, &exp, w, &opts)
                .unwrap()
                .quotients[0]
        };
        let gap = (q(&w12) - q(&w1) - q(&w2)).abs();
        assert!(gap < 1e-9, "additivity gap {gap:.3e}");
    }

    #[test]
    fn bump_correction_quotients_approach_the_oracle() {
        let mesh = unit_mesh(9);
        let gamma = gamma_preset("bump-iso", &GammaParams::default(), &mesh).unwrap();
        let v = nodal_values(&mesh, |x| x[0]);
        let w = nodal_values(&mesh, |x| x[0]);
        let opts = SolverOptions::default();
        let out =
            dtn_correction(&gamma, &mesh, 3.0, &v, &w, &default_eps_schedule(), &opts).unwrap();
        for i in [out.quotients.len() - 2, out.quotients.len() - 1] {
            let rel = (out.quotients[i] - out.oracle).abs() / out.oracle.abs();
            assert!(
                rel < 0.05,
                "ε = {}: quotient {:.8e} vs oracle {:.8e} (rel {rel:.3e})",
                out.eps_list[i],
                out.quotients[i],
                out.oracle
            );
        }
    }

    #[test]
    fn frechet_quotient_reproduces_the_base_along_itself() {
        // Data homogeneity gives v_τ = (1+τ)v₀, so every central quotient is
        // exactly v₀ and the linearization must agree.
        let mesh = unit_mesh(9);
        let phi0 = nodal_values(&mesh, |x| 0.6 * x[0] - 0.8 * x[1] + 0.2 * x[2]);
        let opts = SolverOptions::default();
        let exp =
            frechet_check(&mesh, 3.0, &phi0, &phi0, &default_tau_schedule(), &opts).unwrap();
        let v0_gap = exp
            .linearized
            .axpy(
                -1.0,
                &NodalField::new(mesh.clone(), phi0.clone()).unwrap(),
            )
            .c1_norm();
        assert!(v0_gap < 1e-8, "V differs from v₀ by {v0_gap:.3e}");
        for rec in &exp.records {
            assert!(
                rec.error < 1e-7,
                "τ = {}: quotient error {:.3e}",
                rec.tau,
                rec.error
            );
        }
    }

    #[test]
    fn frechet_quotient_vanishes_for_zero_direction() {
        let mesh = unit_mesh(7);
        let phi0 = nodal_values(&mesh, |x| x[0] + 0.3 * x[1]);
        let phi1 = vec![0.0; mesh.n_nodes()];
        let opts = SolverOptions::default();
        let exp = frechet_check(&mesh, 1.5, &phi0, &phi1, &[0.02, 0.01], &opts).unwrap();
        assert!(exp.linearized.c1_norm() < 1e-10);
        for rec in &exp.records {
            assert!(rec.quotient.c1_norm() < 1e-6, "quotient {:.3e}", rec.quotient.c1_norm());
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(1000))]

        #[test]
        fn power_fit_roundtrips_random_models(
            c0 in -5.0..5.0f64,
            c1_mag in 0.1..3.0f64,
            c1_sign in prop::bool::ANY,
            q in 0.3..6.0f64,
        ) {
            let c1 = if c1_sign { c1_mag } else { -c1_mag };
            let xs: [f64; 3] = [0.125, 0.0625, 0.03125];
            let vs = [
                c0 + c1 * xs[0].powf(q),
                c0 + c1 * xs[1].powf(q),
                c0 + c1 * xs[2].powf(q),
            ];
            // Increments below the converged floor are legitimately treated
            // as flat; only fit the rest.
            let d2 = (vs[1] - vs[2]).abs();
            prop_assume!(d2 > 1e-10 * (1.0 + vs[2].abs()));
            let fit = fit_power_limit(xs, vs).expect("exact model must fit");
            prop_assert!((fit.q - q).abs() < 1e-6 * (1.0 + q));
            prop_assert!((fit.c0 - c0).abs() < 1e-7 * (1.0 + c0.abs()));
        }
    }
}
