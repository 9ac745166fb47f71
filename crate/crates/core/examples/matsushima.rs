//! Grade the holomorphic vector fields by `ad(-grad f)` at both solitons and
//! check that the zero block is reductive.

use solitonlab::decomposition::{check_h0_structure, decompose, restricted_conjugate_operator};
use solitonlab::energy::{ricci_potential, run_flow, FlowParams};
use solitonlab::operators::kernel_of_l;
use solitonlab::{make_backend, Mode, ModelId, PotentialField};

fn main() -> solitonlab::Result<()> {
    for model in [ModelId::CP1, ModelId::DP1] {
        let geom = make_backend(model, 128)?;
        let phi = run_flow(&geom, &PotentialField::zero(&geom), &FlowParams::default())?
            .into_converged()?
            .phi;
        let result = decompose(&geom, &phi)?;
        let names: Vec<&str> = geom.field_algebra.basis.iter().map(|g| g.name).collect();
        println!(
            "{model}: basis {names:?}, soliton coefficients {:?}",
            result.soliton.coefficients
        );
        for block in &result.lambda_blocks {
            println!(
                "  lambda = {:.12}  dim {}",
                block.lambda, block.multiplicity
            );
        }
        println!("  grading defect {:.1e}", result.grading_defect);
        let h0 = check_h0_structure(&geom, &result);
        println!(
            "  h0: dim {}, centre {}, derived {}, pass {}",
            h0.details["h0_dim"], h0.details["center_dim"], h0.details["derived_dim"], h0.pass
        );

        let f = ricci_potential(&geom, &phi)?.values;
        for k in [0, 1] {
            let kernel = kernel_of_l(&geom, &phi, &f, Mode(k), None)?;
            let r = restricted_conjugate_operator(&geom, &phi, &kernel)?;
            println!(
                "  mode {k}: eigenvalues of Lbar on ker L {:?}",
                r.spectrum.eigenvalues
            );
        }
    }
    Ok(())
}
