//! Flow the reference metric on the blow-up of CP² to the Koiso soliton and
//! compare its profile with the shooting solution.

use solitonlab::energy::{run_flow, FlowParams};
use solitonlab::oracle::KoisoOracle;
use solitonlab::{make_backend, ModelId, PotentialField};

fn main() -> solitonlab::Result<()> {
    let oracle = KoisoOracle::solve();
    println!(
        "shooting: soliton coefficient c = {:.15}",
        oracle.field_coefficient()
    );

    let geom = make_backend(ModelId::DP1, 128)?;
    let flow = run_flow(&geom, &PotentialField::zero(&geom), &FlowParams::default())?;
    for r in &flow.trace.records {
        println!(
            "{:4}  H = {:.15e}  |Lf| = {:.3e}  step = {:.3e}",
            r.iter, r.h, r.grad_norm, r.step
        );
    }
    println!("status: {:?}", flow.status);

    let metric = geom.metric(&flow.phi)?;
    let defect = metric
        .y
        .iter()
        .zip(&metric.profile)
        .map(|(y, t)| (t - oracle.profile(*y)).abs())
        .fold(0.0_f64, f64::max);
    println!("sup |Θ - Θ_shoot| = {defect:.3e}");
    println!("H(φ*) = {:.15e}", flow.h);
    Ok(())
}
