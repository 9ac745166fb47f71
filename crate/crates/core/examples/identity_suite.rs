//! Run the discrete integration-by-parts and conjugation identities on a
//! batch of random metrics, printing the worst defects per backend.

use solitonlab::energy::ricci_potential;
use solitonlab::geometry::{identity_trial, IdentityDefects};
use solitonlab::sample::SmoothSampler;
use solitonlab::{make_backend, ModelId};

fn main() -> solitonlab::Result<()> {
    for model in [ModelId::CP1, ModelId::DP1] {
        let geom = make_backend(model, 128)?;
        let mut sampler = SmoothSampler::new(&geom, 99);
        let mut worst = IdentityDefects::default();
        for _ in 0..10 {
            let phi = sampler.admissible_potential(0.25);
            let f = ricci_potential(&geom, &phi)?.values;
            let (u, v) = (sampler.complex_function(1.0), sampler.complex_function(1.0));
            worst = worst.max(identity_trial(&geom, &phi, &u, &v, &f)?);
        }
        println!("{model}: {worst:#?}");
    }
    Ok(())
}
