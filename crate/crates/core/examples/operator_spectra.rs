//! Spectra of the weighted Laplacian and of `L`, kernels in the first three
//! fiber modes, and the commutator `[L, L̄]` at the reference metrics.

use solitonlab::energy::ricci_potential;
use solitonlab::operators::{
    assemble_l, commutator_norm, kernel_of_l, weighted_laplacian_spectrum,
};
use solitonlab::{make_backend, Mode, ModelId, PotentialField};

fn main() -> solitonlab::Result<()> {
    for model in [ModelId::CP1, ModelId::DP1] {
        let geom = make_backend(model, 128)?;
        let phi = PotentialField::zero(&geom);
        let f = ricci_potential(&geom, &phi)?.values;

        let lap = weighted_laplacian_spectrum(&geom, &phi, &f)?;
        let low: Vec<String> = lap
            .eigenvalues
            .iter()
            .take(5)
            .map(|l| format!("{l:.10}"))
            .collect();
        println!(
            "{model}: lowest weighted-Laplacian eigenvalues {}",
            low.join(", ")
        );

        let l = assemble_l(&geom, &phi, &f, Mode::INVARIANT)?;
        println!(
            "{model}: |L| = {:.6e}, adjointness defect {:.2e}",
            l.operator_norm(),
            l.adjointness_defect()
        );
        for k in -1..=1 {
            let kernel = kernel_of_l(&geom, &phi, &f, Mode(k), None)?;
            let comm = commutator_norm(&geom, &phi, &f, Mode(k))?;
            println!(
                "{model}: mode {k:+}: dim ker L = {}, |[L, L̄]| / |L|² = {:.6e}",
                kernel.dimension,
                comm.relative()
            );
        }
    }
    Ok(())
}
