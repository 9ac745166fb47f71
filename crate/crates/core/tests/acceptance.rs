//! Acceptance criteria, one PASS/FAIL line each. Runs without the libtest
//! harness so the lines are always printed; exits non-zero if any fails.

use solitonlab::cli::{cmd_decompose, cmd_flow, cmd_spectrum, cmd_verify, RunConfig};
use solitonlab::decomposition::{check_h0_structure, decompose, restricted_conjugate_operator};
use solitonlab::energy::{ricci_potential, run_flow, FlowParams, FlowResult};
use solitonlab::operators::{
    assemble_l, assemble_lbar, commutator_norm, kernel_of_l, weighted_laplacian_spectrum,
};
use solitonlab::oracle::KoisoOracle;
use solitonlab::sample::SmoothSampler;
use solitonlab::variation::{check_first_variation, check_hessian_formula, DEFAULT_STEPS};
use solitonlab::{make_backend, Mode, ModelGeometry, ModelId, PotentialField};
use std::path::Path;
use std::sync::OnceLock;
use std::time::{Duration, Instant};

const N: usize = 128;

/// Soliton coefficient from the shooting oracle, frozen.
const FROZEN_SOLITON_COEFFICIENT: f64 = 0.527_619_519_896_963;
/// `‖[L, L̄]‖ / ‖L‖²` in the first fiber mode at the DP1 reference metric,
/// N = 128, frozen slightly below its measured value 2.7623e-5.
const FROZEN_NON_SOLITON_COMMUTATOR: f64 = 2.76e-5;

struct Outcome {
    pass: bool,
    summary: String,
}

fn outcome(pass: bool, summary: String) -> Outcome {
    Outcome { pass, summary }
}

fn sup(v: &[f64]) -> f64 {
    v.iter().fold(0.0_f64, |m, x| m.max(x.abs()))
}

/// Built before any DP1 flow runs.
fn oracle() -> &'static KoisoOracle {
    static ORACLE: OnceLock<KoisoOracle> = OnceLock::new();
    ORACLE.get_or_init(KoisoOracle::solve)
}

fn koiso() -> &'static (ModelGeometry, FlowResult) {
    static KOISO: OnceLock<(ModelGeometry, FlowResult)> = OnceLock::new();
    KOISO.get_or_init(|| {
        let _ = oracle();
        let g = make_backend(ModelId::DP1, N).unwrap();
        let flow = run_flow(&g, &PotentialField::zero(&g), &FlowParams::default()).unwrap();
        (g, flow)
    })
}

fn soliton(model: ModelId) -> (ModelGeometry, PotentialField) {
    match model {
        ModelId::CP1 => {
            let g = make_backend(ModelId::CP1, N).unwrap();
            let phi = PotentialField::zero(&g);
            (g, phi)
        }
        ModelId::DP1 => {
            let (g, flow) = koiso();
            (g.clone(), flow.phi.clone())
        }
    }
}

fn random_potentials(g: &ModelGeometry, seed: u64, count: usize) -> Vec<PotentialField> {
    let mut s = SmoothSampler::new(g, seed);
    (0..count).map(|_| s.admissible_potential(0.3)).collect()
}

fn criterion_1() -> Outcome {
    let start = Instant::now();
    let (mut adj, mut min_eig) = (0.0_f64, f64::INFINITY);
    for (model, seed) in [(ModelId::CP1, 101), (ModelId::DP1, 102)] {
        let g = make_backend(model, N).unwrap();
        for phi in random_potentials(&g, seed, 10) {
            let f = ricci_potential(&g, &phi).unwrap().values;
            for mode in [Mode(-1), Mode(0), Mode(1)] {
                let l = assemble_l(&g, &phi, &f, mode).unwrap();
                let lbar = assemble_lbar(&g, &phi, &f, mode).unwrap();
                adj = adj
                    .max(l.adjointness_defect())
                    .max(lbar.adjointness_defect());
                min_eig = min_eig
                    .min(l.min_symmetrized_eigenvalue().unwrap())
                    .min(lbar.min_symmetrized_eigenvalue().unwrap());
            }
        }
    }
    let elapsed = start.elapsed();
    outcome(
        adj <= 1e-9 && min_eig >= -1e-8 && elapsed <= Duration::from_secs(30),
        format!("adjointness {adj:.1e} (≤ 1e-9), min eigenvalue {min_eig:.1e} (≥ -1e-8), {elapsed:.1?} (≤ 30 s)"),
    )
}

fn criterion_2() -> Outcome {
    let mut worst_gap = f64::INFINITY;
    let mut worst_zero = 0.0_f64;
    for (model, seed) in [(ModelId::CP1, 101), (ModelId::DP1, 102)] {
        let g = make_backend(model, N).unwrap();
        for phi in random_potentials(&g, seed, 10) {
            let f = ricci_potential(&g, &phi).unwrap().values;
            let s = weighted_laplacian_spectrum(&g, &phi, &f).unwrap();
            worst_zero = worst_zero.max(s.eigenvalues[0].abs());
            worst_gap = worst_gap.min(s.eigenvalues[1]);
        }
    }
    let g = make_backend(ModelId::CP1, N).unwrap();
    let phi = PotentialField::zero(&g);
    let s = weighted_laplacian_spectrum(&g, &phi, &vec![0.0; N]).unwrap();
    let mult = s.multiplicity_near(1.0, 1e-6);
    let pass = worst_gap >= 1.0 - 1e-6 && worst_zero <= 1e-8 && mult == 1;
    outcome(
        pass,
        format!(
            "min λ₁ {worst_gap:.10} (≥ 1 - 1e-6), |λ₀| ≤ {worst_zero:.1e}, round sphere: eigenvalue 1 multiplicity {mult}"
        ),
    )
}

fn criterion_3() -> Outcome {
    let mut dims = Vec::new();
    let mut residual = 0.0_f64;
    for model in [ModelId::CP1, ModelId::DP1] {
        let (g, phi) = soliton(model);
        let f = ricci_potential(&g, &phi).unwrap().values;
        let k = kernel_of_l(&g, &phi, &f, Mode::INVARIANT, None).unwrap();
        dims.push(k.dimension);
        let l = assemble_l(&g, &phi, &f, Mode::INVARIANT).unwrap();
        for u in g.holomorphy_potentials(&phi).unwrap() {
            residual = residual.max(l.norm_of(&l.apply(&u)));
        }
    }
    outcome(
        dims == [2, 2] && residual <= 1e-7,
        format!(
            "kernel dimensions CP1 {} DP1 {} (2, 2), potential residual {residual:.1e} (≤ 1e-7)",
            dims[0], dims[1]
        ),
    )
}

fn criterion_4() -> Outcome {
    let (mut worst, mut order_dev) = (0.0_f64, 0.0_f64);
    let mut count = 0;
    for (model, seed) in [(ModelId::CP1, 201), (ModelId::DP1, 202)] {
        let g = make_backend(model, N).unwrap();
        let mut s = SmoothSampler::new(&g, seed);
        for _ in 0..10 {
            let phi = s.admissible_potential(0.3);
            let d = s.direction(g.metric(&phi).unwrap().margin);
            let r = check_first_variation(&g, &phi, &d, &DEFAULT_STEPS).unwrap();
            worst = worst.max(r.relative_error);
            order_dev = order_dev.max((r.order_estimate - 2.0).abs());
            count += 1;
        }
    }
    outcome(
        worst <= 1e-7 && order_dev <= 0.1,
        format!("{count} pairs: worst rel err {worst:.1e} (≤ 1e-7), worst |order - 2| {order_dev:.3} (≤ 0.1)"),
    )
}

fn criterion_5() -> Outcome {
    let g = make_backend(ModelId::CP1, N).unwrap();
    let (mut h, mut fsup, mut iters, mut slowest) = (0.0_f64, 0.0_f64, 0, Duration::ZERO);
    let mut all_converged = true;
    for phi0 in random_potentials(&g, 301, 5) {
        let start = Instant::now();
        let flow = run_flow(&g, &phi0, &FlowParams::default()).unwrap();
        slowest = slowest.max(start.elapsed());
        all_converged &= flow.converged();
        h = h.max(flow.h);
        fsup = fsup.max(sup(&ricci_potential(&g, &flow.phi).unwrap().values));
        iters = iters.max(flow.iterations());
    }
    outcome(
        all_converged && h <= 1e-10 && fsup <= 1e-5 && iters <= 500 && slowest <= Duration::from_secs(10),
        format!("max H {h:.1e} (≤ 1e-10), max |f| {fsup:.1e} (≤ 1e-5), ≤ {iters} iterations, slowest {slowest:.1?}"),
    )
}

fn criterion_6() -> Outcome {
    let c = oracle().field_coefficient();
    let (g, flow) = koiso();
    let metric = g.metric(&flow.phi).unwrap();
    let defect = metric
        .y
        .iter()
        .zip(&metric.profile)
        .map(|(y, t)| (t - oracle().profile(*y)).abs())
        .fold(0.0_f64, f64::max);
    let pass = flow.converged()
        && flow.grad_norm <= 1e-8
        && defect <= 1e-6
        && flow.h > 0.0
        && (c - FROZEN_SOLITON_COEFFICIENT).abs() <= 1e-9;
    outcome(
        pass,
        format!(
            "|Lf| {:.1e} (≤ 1e-8), profile defect {defect:.1e} (≤ 1e-6), H {:.12} (> 0), oracle c {c:.15}",
            flow.grad_norm, flow.h
        ),
    )
}

fn criterion_7() -> Outcome {
    let mut worst = 0.0_f64;
    let mut comm = 0.0_f64;
    for (model, seed) in [(ModelId::CP1, 401), (ModelId::DP1, 402)] {
        let (g, phi) = soliton(model);
        let margin = g.metric(&phi).unwrap().margin;
        let mut s = SmoothSampler::new(&g, seed);
        let pairs: Vec<_> = (0..5)
            .map(|_| (s.direction(margin), s.direction(margin)))
            .collect();
        let r = check_hessian_formula(&g, &phi, &pairs, &DEFAULT_STEPS).unwrap();
        worst = worst.max(r.relative_error);
        let f = ricci_potential(&g, &phi).unwrap().values;
        for mode in [Mode(-1), Mode(0), Mode(1)] {
            comm = comm.max(commutator_norm(&g, &phi, &f, mode).unwrap().relative());
        }
    }
    let g = make_backend(ModelId::DP1, N).unwrap();
    let phi = PotentialField::zero(&g);
    let f = ricci_potential(&g, &phi).unwrap().values;
    let reference = commutator_norm(&g, &phi, &f, Mode(1)).unwrap().relative();
    outcome(
        worst <= 1e-5 && comm <= 1e-7 && reference >= FROZEN_NON_SOLITON_COMMUTATOR,
        format!(
            "Hessian rel err {worst:.1e} (≤ 1e-5), soliton commutator {comm:.1e}·|L|² (≤ 1e-7), \
             reference commutator {reference:.4e}·|L|² (≥ {FROZEN_NON_SOLITON_COMMUTATOR:e})"
        ),
    )
}

fn criterion_8() -> Outcome {
    let mut notes = Vec::new();
    let mut pass = true;

    let (g, phi) = soliton(ModelId::DP1);
    let r = decompose(&g, &phi).unwrap();
    let c = r.soliton.coefficients[g.field_algebra.generator];
    let zero = r.block(0.0, 1e-8).map_or(0, |b| b.multiplicity);
    let top = r.block(c, 1e-8).map_or(0, |b| b.multiplicity);
    let min_eig = r
        .spectrum
        .eigenvalues
        .iter()
        .copied()
        .fold(f64::INFINITY, f64::min);
    let h0 = check_h0_structure(&g, &r);
    pass &= r.lambda_blocks.len() == 2 && zero == 4 && top == 2;
    pass &= (c - FROZEN_SOLITON_COEFFICIENT).abs() <= 1e-6
        && min_eig >= -1e-8
        && r.grading_defect <= 1e-8;
    pass &= h0.pass && h0.details["center_dim"] == 1.0 && h0.details["derived_dim"] == 3.0;
    notes.push(format!(
        "DP1 blocks {{0: {zero}, {c:.9}: {top}}}, min λ {min_eig:.1e}, grading {:.1e}, h0 centre {} derived {}",
        r.grading_defect, h0.details["center_dim"], h0.details["derived_dim"]
    ));

    let f = ricci_potential(&g, &phi).unwrap().values;
    let mut agreement = 0.0_f64;
    for (mode, ad_value) in [(Mode(0), 0.0), (Mode(1), c)] {
        let k = kernel_of_l(&g, &phi, &f, mode, None).unwrap();
        let rs = restricted_conjugate_operator(&g, &phi, &k).unwrap();
        pass &= rs.spectrum.residuals.iter().all(|x| *x <= 1e-7);
        // Each function-level eigenvalue must be an ad-eigenvalue; the top
        // one in each sector is the expected block.
        for l in &rs.spectrum.eigenvalues {
            let nearest = r
                .spectrum
                .eigenvalues
                .iter()
                .map(|e| (e - l).abs())
                .fold(f64::INFINITY, f64::min);
            agreement = agreement.max(nearest);
        }
        let last = *rs.spectrum.eigenvalues.last().unwrap();
        agreement = agreement.max((last - ad_value).abs());
    }
    pass &= agreement <= 1e-6;
    notes.push(format!("function vs ad λ {agreement:.1e}"));

    let (g, phi) = soliton(ModelId::CP1);
    let r = decompose(&g, &phi).unwrap();
    let h0 = check_h0_structure(&g, &r);
    let single = r.lambda_blocks.len() == 1
        && r.lambda_blocks[0].multiplicity == 3
        && r.lambda_blocks[0].lambda.abs() <= 1e-8;
    pass &=
        single && h0.pass && h0.details["center_dim"] == 0.0 && h0.details["derived_dim"] == 3.0;
    notes.push(format!(
        "CP1 single block dim {} centre {} derived {}",
        r.lambda_blocks[0].multiplicity, h0.details["center_dim"], h0.details["derived_dim"]
    ));
    outcome(pass, notes.join("; "))
}

fn run_all(dir: &Path, model: ModelId) -> Vec<i32> {
    let cfg = RunConfig {
        model,
        out_dir: dir.to_path_buf(),
        seed: 5,
        ..RunConfig::default()
    };
    let state = dir.join("final_state.json");
    vec![
        cmd_flow(&cfg),
        cmd_spectrum(&cfg, Some(&state)),
        cmd_verify(&cfg, Some(&state)),
        cmd_decompose(&cfg, Some(&state)),
    ]
}

fn criterion_9() -> Outcome {
    let files = [
        "flow_trace.csv",
        "final_state.json",
        "spectrum.json",
        "verify.json",
        "decomposition.json",
    ];
    let mut pass = true;
    let mut compared = 0;
    for model in [ModelId::CP1, ModelId::DP1] {
        let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
        let codes = (run_all(a.path(), model), run_all(b.path(), model));
        pass &= codes.0 == [0, 0, 0, 0] && codes.1 == codes.0;
        for name in files {
            let (x, y) = (
                std::fs::read(a.path().join(name)),
                std::fs::read(b.path().join(name)),
            );
            pass &= matches!((&x, &y), (Ok(x), Ok(y)) if x == y);
            compared += 1;
        }
    }
    outcome(
        pass,
        format!("{compared} output files byte-identical across two runs"),
    )
}

type Criterion = (&'static str, fn() -> Outcome);

fn main() {
    let criteria: [Criterion; 9] = [
        ("operator identities", criterion_1),
        ("spectral gap", criterion_2),
        ("kernel and holomorphic fields", criterion_3),
        ("first variation", criterion_4),
        ("flow to Kähler–Einstein", criterion_5),
        ("non-Einstein soliton", criterion_6),
        ("Hessian formula", criterion_7),
        ("decomposition", criterion_8),
        ("determinism", criterion_9),
    ];
    let mut failed = 0;
    for (i, (name, run)) in criteria.iter().enumerate() {
        let o = run();
        let tag = if o.pass { "PASS" } else { "FAIL" };
        if !o.pass {
            failed += 1;
        }
        println!("criterion {} [{tag}] {name}: {}", i + 1, o.summary);
    }
    if failed > 0 {
        println!("{failed} of {} acceptance criteria failed", criteria.len());
        std::process::exit(1);
    }
}
