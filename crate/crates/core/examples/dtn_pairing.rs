use std::sync::Arc;

use acl_core::conductivity::{gamma_hat_direct, gamma_preset, max_abs_entry, GammaParams};
use acl_core::mesh::{BoxDomain, SimplicialMesh};
use acl_core::pde::{cell_average_gamma, dtn_pair, nodal_values, solve_quasilinear, SolverOptions};

fn main() {
    let domain = BoxDomain::unit_cube();
    let mesh = Arc::new(SimplicialMesh::build(&domain, 13).expect("mesh"));

    let params = GammaParams::default();
    let gamma = gamma_preset("bump-iso", &params, &mesh).expect("preset");
    println!("preset bump-iso: ellipticity lambda = {:.6}", gamma.lambda);

    // Quasilinear solve, p = 1.5, affine boundary data.
    let p = 1.5;
    let data = nodal_values(&mesh, |x| 0.7 * x[0] - 0.2 * x[1] + 0.1);
    let opts = SolverOptions::default();
    let sol = solve_quasilinear(&gamma, &mesh, p, &data, &opts).expect("solve");
    println!(
        "solve p={p}: converged={} iters={} final residual={:.3e}",
        sol.converged,
        sol.iterations,
        sol.residual_history.last().copied().unwrap_or(f64::NAN)
    );

    // DtN pairing against a linear test function.
    let w = nodal_values(&mesh, |x| x[0]);
    let gamma_cell = cell_average_gamma(&gamma, &mesh, opts.quad_degree);
    let pairing = dtn_pair(&mesh, &gamma_cell, &sol, &w, &opts).expect("dtn");
    println!("dtn pairing <L(f), x1> = {:.10e}", pairing);

    // Fourier slice of the conductivity at a nonzero frequency.
    let k = [std::f64::consts::PI, 0.0, 0.0];
    let hat = gamma_hat_direct(&gamma, &mesh, k, 3);
    println!("gamma_hat(pi e1) max abs entry = {:.10e}", max_abs_entry(&hat));
    println!(
        "gamma_hat(pi e1)[0][0] = {:.10e} + {:.10e} i",
        hat[0][0].re, hat[0][0].im
    );

    // Error surface: invalid exponent must name the admissible set.
    match solve_quasilinear(&gamma, &mesh, 2.0, &data, &opts) {
        Err(e) => println!("p=2 rejected: {e}"),
        Ok(_) => println!("p=2 unexpectedly accepted"),
    }
    match gamma_preset("no-such-preset", &params, &mesh) {
        Err(e) => println!("bad preset rejected: {e}"),
        Ok(_) => println!("bad preset unexpectedly accepted"),
    }
}
