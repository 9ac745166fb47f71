//! Descend `H` on the round sphere from random starts. Every run should end
//! at a Kähler–Einstein metric: `H = 0` and `f_φ = 0`.

use solitonlab::energy::{ricci_potential, run_flow, FlowParams};
use solitonlab::sample::SmoothSampler;
use solitonlab::{make_backend, ModelId};

fn main() -> solitonlab::Result<()> {
    let geom = make_backend(ModelId::CP1, 128)?;
    let mut sampler = SmoothSampler::new(&geom, 2024);
    for run in 0..5 {
        let start = sampler.admissible_potential(0.3);
        let flow = run_flow(&geom, &start, &FlowParams::default())?;
        let f = ricci_potential(&geom, &flow.phi)?;
        let fsup = f.values.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
        let h0 = flow.trace.records[0].h;
        println!(
            "run {run}: H {h0:.3e} -> {:.3e} in {} steps, |f| = {fsup:.2e}, {:?}",
            flow.h,
            flow.iterations(),
            flow.status
        );
    }
    Ok(())
}
