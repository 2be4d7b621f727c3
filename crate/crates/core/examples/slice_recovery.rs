use std::sync::Arc;

use acl_core::conductivity::{gamma_hat_direct, gamma_preset, max_abs_entry, GammaParams};
use acl_core::geom::scale;
use acl_core::mesh::{BoxDomain, SimplicialMesh};
use acl_core::reconstruct::{
    assemble_gamma_hat, eval_d_family1, ExtractionRoute, Family1Frame, Family2Frame,
    ReconstructMode, ReconstructOptions,
};

fn main() {
    let domain = BoxDomain::unit_cube();
    let mesh = Arc::new(SimplicialMesh::build(&domain, 9).expect("mesh"));
    let p = 3.0;

    // Frame geometry at a fixed frequency.
    let xi = [std::f64::consts::PI / 2.0, 0.0, 0.0];
    let f1 = Family1Frame::new(p, xi, [0.0, 1.0, 0.0], [0.0, 0.0, 1.0], 2.0).expect("frame 1");
    println!(
        "family 1: s = {:.6}, nullity = {:.2e}, bracket = {:.2e}",
        f1.s,
        f1.nullity_residual(),
        f1.bracket_residual()
    );
    let f2 = Family2Frame::new(p, xi, [0.0, 1.0, 0.0], [0.0, 0.0, 1.0], 2.0).expect("frame 2");
    println!(
        "family 2: theta = {:.6}, angle residual = {:.2e}, nullity = {:.2e}",
        f2.theta,
        f2.angle_residual(),
        f2.nullity_residual()
    );

    // Full slice recovery against the directly integrated transform.
    let params = GammaParams {
        amplitude: 0.1,
        ..GammaParams::default()
    };
    let gamma = gamma_preset("bump-aniso", &params, &mesh).expect("preset");
    let opts = ReconstructOptions::default();
    let slice = assemble_gamma_hat(
        &gamma,
        &mesh,
        p,
        xi,
        ExtractionRoute::ExactBasis,
        ReconstructMode::Oracle,
        &opts,
    )
    .expect("slice");
    let direct = gamma_hat_direct(&gamma, &mesh, scale(xi, 2.0), opts.quad_degree);
    let scale_ref = max_abs_entry(&direct);
    let mut worst = 0.0f64;
    for i in 0..3 {
        for j in 0..3 {
            worst = worst.max((slice.matrix[i][j] - direct[i][j]).norm() / scale_ref);
        }
    }
    println!("slice vs direct transform: worst relative gap = {worst:.3e}");
    for e in &slice.entries {
        println!(
            "  {:<16} = {:+.6e} {:+.6e} i   [{}]",
            e.label,
            e.value.re,
            e.value.im,
            e.provenance.label()
        );
    }

    // One forward-only response against its oracle value.
    let oracle = eval_d_family1(&gamma, &mesh, &f1, ReconstructMode::Oracle, &opts)
        .expect("oracle response");
    let e2e = eval_d_family1(&gamma, &mesh, &f1, ReconstructMode::EndToEnd, &opts)
        .expect("end-to-end response");
    let rel = (e2e.value - oracle.value).norm() / oracle.value.norm();
    println!(
        "response at t = {}: oracle = {:+.6e}{:+.6e}i, end-to-end = {:+.6e}{:+.6e}i, rel gap = {:.3e}",
        f1.t, oracle.value.re, oracle.value.im, e2e.value.re, e2e.value.im, rel
    );
    if let Some(w) = &e2e.warning {
        println!("  warning: {w}");
    }
}
