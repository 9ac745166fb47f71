//! Finite-difference checks of the first variation of `H` at a random
//! metric and of the Hessian formula `Hess H = ⟨⟨L L̄ ·, ·⟩⟩` at the Koiso
//! soliton.

use solitonlab::energy::{run_flow, FlowParams};
use solitonlab::sample::SmoothSampler;
use solitonlab::variation::{
    check_first_variation, check_hessian_formula, check_z_transport, DEFAULT_STEPS,
};
use solitonlab::{make_backend, ModelId, PotentialField};

fn main() -> solitonlab::Result<()> {
    let geom = make_backend(ModelId::DP1, 128)?;
    let mut sampler = SmoothSampler::new(&geom, 7);

    let phi = sampler.admissible_potential(0.2);
    let dphi = sampler.direction(geom.metric(&phi)?.margin);
    let r = check_first_variation(&geom, &phi, &dphi, &DEFAULT_STEPS)?;
    println!(
        "first variation: FD {:.12e}, <<Lf, dphi>> {:.12e}, rel err {:.2e}, order {:.3}",
        r.numeric[0], r.analytic[0], r.relative_error, r.order_estimate
    );

    let soliton = run_flow(&geom, &PotentialField::zero(&geom), &FlowParams::default())?
        .into_converged()?
        .phi;
    let margin = geom.metric(&soliton)?.margin;
    let pairs: Vec<_> = (0..5)
        .map(|_| (sampler.direction(margin), sampler.direction(margin)))
        .collect();
    let r = check_hessian_formula(&geom, &soliton, &pairs, &DEFAULT_STEPS)?;
    for (fd, an) in r.numeric.iter().zip(&r.analytic) {
        println!("hessian: FD {fd:+.10e}  <<L Lbar u, v>> {an:+.10e}");
    }
    println!(
        "hessian: worst rel err {:.2e}, order {:.3}, swap defect {:.1e}",
        r.relative_error, r.order_estimate, r.details["swap_defect"]
    );

    let r = check_z_transport(
        &geom,
        &soliton,
        &sampler.direction(margin),
        &[1e-2, 5e-3, 2.5e-3],
    )?;
    println!(
        "transport: defect {:.1e}, derivative rel err {:.2e}, order {:.3}",
        r.details["transport_defect"], r.relative_error, r.order_estimate
    );
    Ok(())
}
