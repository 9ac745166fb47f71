//! Batch commands behind the `solitonlab` binary.
//!
//! Each command reads a [`RunConfig`], optionally a state file written by
//! `flow`, and writes one JSON (or CSV) artefact into the output directory.
//! Outputs contain no timestamps or paths from the environment, so reruns
//! with the same configuration are byte-identical.
//!
//! Exit codes: `0` success, `1` configuration or input error, `2` flow did
//! not converge or the soliton gate rejected the state, `3` a verification
//! check failed.

use crate::decomposition::{check_h0_structure, decompose, restricted_conjugate_operator};
use crate::energy::{ricci_potential, run_flow, FlowParams, FlowStatus};
use crate::error::LabError;
use crate::geometry::{
    identity_trial, make_backend, Mode, ModelGeometry, ModelId, PotentialField, DEFAULT_NODES,
};
use crate::operators::{
    assemble_l, assemble_lbar, commutator_norm, kernel_of_l, weighted_laplacian_spectrum,
};
use crate::sample::SmoothSampler;
use crate::variation::{
    check_first_variation, check_hessian_formula, check_z_transport, CheckReport, DEFAULT_STEPS,
};
use clap::{Parser, Subcommand};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");
pub const OUT_ENV: &str = "SOLITONLAB_OUT";

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 1;
pub const EXIT_NOT_CONVERGED: i32 = 2;
pub const EXIT_CHECK_FAILED: i32 = 3;

/// Named tolerances and their defaults.
pub const DEFAULT_TOLERANCES: [(&str, f64); 8] = [
    ("adjointness", 1e-9),
    ("commutator", 1e-7),
    ("first_variation", 1e-7),
    ("h0_structure", 1e-8),
    ("hessian", 1e-5),
    ("positivity", 1e-8),
    ("spectral_gap", 1e-6),
    ("z_transport", 1e-7),
];

/// Steps for the transport check; its order estimate needs differences well
/// above rounding.
const Z_TRANSPORT_STEPS: [f64; 3] = [1e-2, 5e-3, 2.5e-3];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub model: ModelId,
    pub n_nodes: usize,
    pub max_iter: usize,
    pub grad_tol: f64,
    pub step0: f64,
    pub seed: u64,
    /// Direction pairs for the Hessian check.
    pub n_pairs: usize,
    /// Sup norm of a seeded random starting potential; `0` starts at `φ = 0`.
    pub start_amplitude: f64,
    /// Overrides of [`DEFAULT_TOLERANCES`].
    pub tolerances: BTreeMap<String, f64>,
    pub out_dir: PathBuf,
}

impl Default for RunConfig {
    fn default() -> Self {
        let flow = FlowParams::default();
        RunConfig {
            model: ModelId::CP1,
            n_nodes: DEFAULT_NODES,
            max_iter: flow.max_iter,
            grad_tol: flow.grad_tol,
            step0: flow.step0,
            seed: 0,
            n_pairs: 5,
            start_amplitude: 0.0,
            tolerances: BTreeMap::new(),
            out_dir: PathBuf::from("."),
        }
    }
}

impl RunConfig {
    pub fn from_json_file(path: &Path) -> Result<Self, LabError> {
        let text = fs::read_to_string(path)
            .map_err(|e| LabError::Config(format!("{}: {e}", path.display())))?;
        serde_json::from_str(&text)
            .map_err(|e| LabError::Config(format!("{}: {e}", path.display())))
    }

    pub fn validate(&self) -> Result<(), LabError> {
        if self.n_nodes < crate::geometry::MIN_NODES {
            return Err(LabError::ResolutionTooLow {
                requested: self.n_nodes,
                floor: crate::geometry::MIN_NODES,
            });
        }
        if !(self.grad_tol > 0.0) || !(self.step0 > 0.0) {
            return Err(LabError::Config(
                "grad_tol and step0 must be positive".into(),
            ));
        }
        if !(self.start_amplitude >= 0.0) || !self.start_amplitude.is_finite() {
            return Err(LabError::Config(
                "start_amplitude must be finite and non-negative".into(),
            ));
        }
        if self.n_pairs == 0 {
            return Err(LabError::Config("n_pairs must be at least 1".into()));
        }
        for (name, value) in &self.tolerances {
            if !DEFAULT_TOLERANCES.iter().any(|(n, _)| n == name) {
                return Err(LabError::Config(format!("unknown tolerance `{name}`")));
            }
            if !(*value > 0.0) || !value.is_finite() {
                return Err(LabError::Config(format!(
                    "tolerance `{name}` must be positive"
                )));
            }
        }
        Ok(())
    }

    /// Defaults merged with overrides.
    pub fn resolved_tolerances(&self) -> BTreeMap<String, f64> {
        DEFAULT_TOLERANCES
            .iter()
            .map(|(n, v)| {
                (
                    n.to_string(),
                    self.tolerances.get(*n).copied().unwrap_or(*v),
                )
            })
            .collect()
    }

    pub fn tolerance(&self, name: &str) -> f64 {
        self.resolved_tolerances()[name]
    }

    pub fn flow_params(&self) -> FlowParams {
        FlowParams {
            max_iter: self.max_iter,
            grad_tol: self.grad_tol,
            step0: self.step0,
            ..FlowParams::default()
        }
    }

    /// The configuration as embedded in outputs: everything except the
    /// output directory, which would tie the bytes to the file system.
    pub fn embedded(&self) -> Value {
        let mut v = serde_json::to_value(self).expect("config serialises");
        v.as_object_mut()
            .expect("config is an object")
            .remove("out_dir");
        v
    }

    fn provenance(&self) -> Value {
        json!({
            "version": VERSION,
            "config": self.embedded(),
            "tolerances": self.resolved_tolerances(),
        })
    }
}

/// `φ` with the grid it lives on, as written by `flow`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StateFile {
    pub model: ModelId,
    pub n_nodes: usize,
    pub phi: Vec<f64>,
    pub f: Vec<f64>,
    pub h: f64,
    pub grad_norm: f64,
}

fn load_state(
    cfg: &RunConfig,
    geom: &ModelGeometry,
    path: Option<&Path>,
) -> Result<PotentialField, LabError> {
    let Some(path) = path else {
        return Ok(PotentialField::zero(geom));
    };
    let text = fs::read_to_string(path)
        .map_err(|e| LabError::Config(format!("{}: {e}", path.display())))?;
    let bad = |e: serde_json::Error| LabError::Config(format!("{}: {e}", path.display()));
    let mut doc: Value = serde_json::from_str(&text).map_err(bad)?;
    // Accept both a full `final_state.json` and a bare state object.
    let body = match doc.get_mut("state") {
        Some(inner) => inner.take(),
        None => doc,
    };
    let state: StateFile = serde_json::from_value(body).map_err(bad)?;
    if state.model != cfg.model || state.n_nodes != cfg.n_nodes {
        return Err(LabError::Config(format!(
            "state file is for {} with {} nodes, configuration asks for {} with {}",
            state.model, state.n_nodes, cfg.model, cfg.n_nodes
        )));
    }
    PotentialField::new(geom, state.phi)
}

fn write_json(cfg: &RunConfig, name: &str, value: &Value) -> Result<(), LabError> {
    fs::create_dir_all(&cfg.out_dir)
        .map_err(|e| LabError::Config(format!("{}: {e}", cfg.out_dir.display())))?;
    let path = cfg.out_dir.join(name);
    let mut text = serde_json::to_string_pretty(value).expect("values serialise");
    text.push('\n');
    fs::write(&path, text).map_err(|e| LabError::Config(format!("{}: {e}", path.display())))
}

fn report_error(e: &LabError) -> i32 {
    eprintln!("solitonlab: {e}");
    match e {
        LabError::NotSoliton { .. } | LabError::LineSearchFailed { .. } => EXIT_NOT_CONVERGED,
        _ => EXIT_CONFIG,
    }
}

/// Run the flow from `φ = 0` (or a seeded random start); writes `flow_trace.csv` and `final_state.json`.
pub fn cmd_flow(cfg: &RunConfig) -> i32 {
    match flow_inner(cfg) {
        Ok(code) => code,
        Err(e) => report_error(&e),
    }
}

fn flow_inner(cfg: &RunConfig) -> Result<i32, LabError> {
    cfg.validate()?;
    let geom = make_backend(cfg.model, cfg.n_nodes)?;
    let start = if cfg.start_amplitude > 0.0 {
        SmoothSampler::new(&geom, cfg.seed).admissible_potential(cfg.start_amplitude)
    } else {
        PotentialField::zero(&geom)
    };
    let result = run_flow(&geom, &start, &cfg.flow_params())?;
    let f = ricci_potential(&geom, &result.phi)?;

    fs::create_dir_all(&cfg.out_dir)
        .map_err(|e| LabError::Config(format!("{}: {e}", cfg.out_dir.display())))?;
    let header = vec![
        format!("solitonlab {VERSION}"),
        format!("config {}", cfg.embedded()),
        format!(
            "tolerances {}",
            serde_json::to_string(&cfg.resolved_tolerances()).expect("map serialises")
        ),
    ];
    let mut csv = Vec::new();
    result
        .trace
        .write_csv(&mut csv, &header)
        .expect("writing to memory");
    let path = cfg.out_dir.join("flow_trace.csv");
    fs::write(&path, csv).map_err(|e| LabError::Config(format!("{}: {e}", path.display())))?;

    let state = StateFile {
        model: cfg.model,
        n_nodes: cfg.n_nodes,
        phi: result.phi.values.clone(),
        f: f.values,
        h: result.h,
        grad_norm: result.grad_norm,
    };
    let mut out = cfg.provenance();
    out["status"] = serde_json::to_value(&result.status).expect("status serialises");
    out["iterations"] = json!(result.iterations());
    out["state"] = serde_json::to_value(&state).expect("state serialises");
    write_json(cfg, "final_state.json", &out)?;
    Ok(match result.status {
        FlowStatus::Converged => EXIT_OK,
        _ => {
            eprintln!(
                "solitonlab: flow did not converge ({:?}, |Lf| = {:e})",
                result.status, result.grad_norm
            );
            EXIT_NOT_CONVERGED
        }
    })
}

/// Spectra, kernels and commutators at a state; writes `spectrum.json`.
pub fn cmd_spectrum(cfg: &RunConfig, state: Option<&Path>) -> i32 {
    match spectrum_inner(cfg, state) {
        Ok(()) => EXIT_OK,
        Err(e) => report_error(&e),
    }
}

fn spectrum_inner(cfg: &RunConfig, state: Option<&Path>) -> Result<(), LabError> {
    cfg.validate()?;
    let geom = make_backend(cfg.model, cfg.n_nodes)?;
    let phi = load_state(cfg, &geom, state)?;
    let f = ricci_potential(&geom, &phi)?.values;

    let laplacian = weighted_laplacian_spectrum(&geom, &phi, &f)?;
    let l = assemble_l(&geom, &phi, &f, Mode::INVARIANT)?;
    let l_spectrum = l.spectrum(None)?;
    let mut sectors = Vec::new();
    for mode in [Mode(-1), Mode(0), Mode(1)] {
        let kernel = kernel_of_l(&geom, &phi, &f, mode, None)?;
        let comm = commutator_norm(&geom, &phi, &f, mode)?;
        sectors.push(json!({
            "mode": mode.0,
            "kernel_dimension": kernel.dimension,
            "kernel_tolerance": kernel.tolerance,
            "kernel_gap": kernel.gap,
            "kernel_warning": kernel.warning,
            "commutator_norm": comm.norm,
            "l_norm": comm.l_norm,
            "commutator_relative": comm.relative(),
        }));
    }
    let potential_residuals: Vec<f64> = geom
        .holomorphy_potentials(&phi)?
        .iter()
        .map(|u| l.norm_of(&l.apply(u)))
        .collect();

    let mut out = cfg.provenance();
    out["weighted_laplacian"] = laplacian.to_json(false);
    out["spectral_gap"] = json!(laplacian.smallest_above(1e-6));
    out["l_invariant"] = l_spectrum.to_json(false);
    out["sectors"] = Value::Array(sectors);
    out["holomorphy_potential_residuals"] = json!(potential_residuals);
    write_json(cfg, "spectrum.json", &out)
}

#[derive(Debug, Clone, Serialize)]
struct VerifyEntry {
    name: String,
    /// `pass`, `fail` or `skipped`.
    status: &'static str,
    #[serde(skip_serializing_if = "Option::is_none")]
    report: Option<CheckReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    value: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    tolerance: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    message: Option<String>,
}

impl VerifyEntry {
    fn from_report(mut report: CheckReport, tol: f64) -> Self {
        report.tolerance = tol;
        report.pass = report.relative_error <= tol;
        VerifyEntry {
            name: report.name.clone(),
            status: if report.pass { "pass" } else { "fail" },
            report: Some(report),
            value: None,
            tolerance: None,
            message: None,
        }
    }

    /// `value ≤ tol` (or `value ≥ tol` when `at_least`).
    fn bound(name: &str, value: f64, tol: f64, at_least: bool) -> Self {
        let ok = if at_least { value >= tol } else { value <= tol };
        VerifyEntry {
            name: name.to_string(),
            status: if ok { "pass" } else { "fail" },
            report: None,
            value: Some(value),
            tolerance: Some(tol),
            message: None,
        }
    }

    fn skipped(name: &str, why: String) -> Self {
        VerifyEntry {
            name: name.to_string(),
            status: "skipped",
            report: None,
            value: None,
            tolerance: None,
            message: Some(why),
        }
    }
}

/// Variation and operator checks at a state; writes `verify.json`.
/// Checks restricted to critical points are recorded as skipped elsewhere.
pub fn cmd_verify(cfg: &RunConfig, state: Option<&Path>) -> i32 {
    match verify_inner(cfg, state) {
        Ok(true) => EXIT_OK,
        Ok(false) => EXIT_CHECK_FAILED,
        Err(e) => report_error(&e),
    }
}

fn verify_inner(cfg: &RunConfig, state: Option<&Path>) -> Result<bool, LabError> {
    cfg.validate()?;
    let geom = make_backend(cfg.model, cfg.n_nodes)?;
    let phi = load_state(cfg, &geom, state)?;
    let f = ricci_potential(&geom, &phi)?.values;
    let metric = geom.metric(&phi)?;
    let mut sampler = SmoothSampler::new(&geom, cfg.seed);
    let mut entries = Vec::new();

    let l = assemble_l(&geom, &phi, &f, Mode::INVARIANT)?;
    let lbar = assemble_lbar(&geom, &phi, &f, Mode::INVARIANT)?;
    let adj = cfg.tolerance("adjointness");
    entries.push(VerifyEntry::bound(
        "adjointness_l",
        l.adjointness_defect(),
        adj,
        false,
    ));
    entries.push(VerifyEntry::bound(
        "adjointness_lbar",
        lbar.adjointness_defect(),
        adj,
        false,
    ));
    entries.push(VerifyEntry::bound(
        "min_eigenvalue_l",
        l.min_symmetrized_eigenvalue()?,
        -cfg.tolerance("positivity"),
        true,
    ));
    let gap = weighted_laplacian_spectrum(&geom, &phi, &f)?
        .smallest_above(1e-6)
        .unwrap_or(f64::NAN);
    entries.push(VerifyEntry::bound(
        "spectral_gap",
        gap,
        1.0 - cfg.tolerance("spectral_gap"),
        true,
    ));

    let (u, v) = (sampler.complex_function(1.0), sampler.complex_function(1.0));
    let defects = identity_trial(&geom, &phi, &u, &v, &f)?;
    entries.push(VerifyEntry {
        name: "identity_suite".into(),
        status: if defects.passes() { "pass" } else { "fail" },
        report: None,
        value: None,
        tolerance: None,
        message: Some(serde_json::to_string(&defects).expect("defects serialise")),
    });

    let dphi = sampler.direction(metric.margin);
    let fv = check_first_variation(&geom, &phi, &dphi, &DEFAULT_STEPS)?;
    entries.push(VerifyEntry::from_report(
        fv,
        cfg.tolerance("first_variation"),
    ));

    let pairs: Vec<(Vec<f64>, Vec<f64>)> = (0..cfg.n_pairs)
        .map(|_| {
            (
                sampler.direction(metric.margin),
                sampler.direction(metric.margin),
            )
        })
        .collect();
    match check_hessian_formula(&geom, &phi, &pairs, &DEFAULT_STEPS) {
        Ok(r) => entries.push(VerifyEntry::from_report(r, cfg.tolerance("hessian"))),
        Err(e @ LabError::NotCritical { .. }) => {
            entries.push(VerifyEntry::skipped("hessian_formula", e.to_string()))
        }
        Err(e) => return Err(e),
    }
    let dz = sampler.direction(metric.margin);
    match check_z_transport(&geom, &phi, &dz, &Z_TRANSPORT_STEPS) {
        Ok(r) => entries.push(VerifyEntry::from_report(r, cfg.tolerance("z_transport"))),
        Err(e @ (LabError::NotCritical { .. } | LabError::NotSoliton { .. })) => {
            entries.push(VerifyEntry::skipped("z_transport", e.to_string()))
        }
        Err(e) => return Err(e),
    }
    if crate::variation::CriticalState::new(&geom, &phi).is_ok() {
        for mode in [Mode(0), Mode(1)] {
            let c = commutator_norm(&geom, &phi, &f, mode)?;
            entries.push(VerifyEntry::bound(
                &format!("commutator_mode_{}", mode.0),
                c.relative(),
                cfg.tolerance("commutator"),
                false,
            ));
        }
    }

    let all_pass = entries.iter().all(|e| e.status != "fail");
    for e in entries.iter().filter(|e| e.status == "fail") {
        eprintln!("solitonlab: check `{}` failed", e.name);
    }
    let mut out = cfg.provenance();
    out["all_pass"] = json!(all_pass);
    out["checks"] = serde_json::to_value(&entries).expect("entries serialise");
    write_json(cfg, "verify.json", &out)?;
    Ok(all_pass)
}

/// Eigenspace decomposition at a soliton; writes `decomposition.json`.
pub fn cmd_decompose(cfg: &RunConfig, state: Option<&Path>) -> i32 {
    match decompose_inner(cfg, state) {
        Ok(()) => EXIT_OK,
        Err(e) => report_error(&e),
    }
}

fn decompose_inner(cfg: &RunConfig, state: Option<&Path>) -> Result<(), LabError> {
    cfg.validate()?;
    let geom = make_backend(cfg.model, cfg.n_nodes)?;
    let phi = load_state(cfg, &geom, state)?;
    let result = decompose(&geom, &phi)?;
    let mut h0 = check_h0_structure(&geom, &result);
    h0.tolerance = cfg.tolerance("h0_structure");
    h0.pass = h0.relative_error <= h0.tolerance;

    let f = ricci_potential(&geom, &phi)?.values;
    let mut restricted = Vec::new();
    for mode in [Mode(0), Mode(1)] {
        let kernel = kernel_of_l(&geom, &phi, &f, mode, None)?;
        let mut r = restricted_conjugate_operator(&geom, &phi, &kernel)?;
        r.spectrum.basis = None;
        restricted.push(r);
    }
    let mut out = cfg.provenance();
    out["decomposition"] = serde_json::to_value(&result).expect("result serialises");
    out["h0_structure"] = serde_json::to_value(&h0).expect("report serialises");
    out["restricted_conjugate"] = serde_json::to_value(&restricted).expect("spectra serialise");
    write_json(cfg, "decomposition.json", &out)
}

#[derive(Debug, Parser)]
#[command(
    name = "solitonlab",
    version,
    about = "H-functional flows, spectra and soliton decompositions"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// JSON configuration file; flags override its fields.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    model: Option<ModelId>,
    #[arg(long, global = true)]
    nodes: Option<usize>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true)]
    max_iter: Option<usize>,
    #[arg(long, global = true)]
    grad_tol: Option<f64>,
    #[arg(long, global = true)]
    step0: Option<f64>,
    #[arg(long, global = true)]
    pairs: Option<usize>,
    #[arg(long, global = true)]
    start_amplitude: Option<f64>,
    /// Output directory (overrides the configuration and SOLITONLAB_OUT).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run the flow from φ = 0.
    Flow,
    /// Spectra at a state.
    Spectrum {
        #[arg(long)]
        state: Option<PathBuf>,
    },
    /// Finite-difference and operator checks at a state.
    Verify {
        #[arg(long)]
        state: Option<PathBuf>,
    },
    /// Decomposition of h(X) at a soliton.
    Decompose {
        #[arg(long)]
        state: Option<PathBuf>,
    },
}

/// Pull `--tol.<name> <value>` and `--tol.<name>=<value>` out of `args`.
fn split_tolerances(args: Vec<String>) -> Result<(Vec<String>, BTreeMap<String, f64>), LabError> {
    let mut rest = Vec::with_capacity(args.len());
    let mut tols = BTreeMap::new();
    let mut it = args.into_iter();
    while let Some(arg) = it.next() {
        let Some(spec) = arg.strip_prefix("--tol.") else {
            rest.push(arg);
            continue;
        };
        let (name, value) = match spec.split_once('=') {
            Some((n, v)) => (n.to_string(), v.to_string()),
            None => {
                let v = it
                    .next()
                    .ok_or_else(|| LabError::Config(format!("--tol.{spec} needs a value")))?;
                (spec.to_string(), v)
            }
        };
        let value: f64 = value
            .parse()
            .map_err(|_| LabError::Config(format!("--tol.{name}: bad number `{value}`")))?;
        tols.insert(name, value);
    }
    Ok((rest, tols))
}

/// Entry point of the binary; returns the process exit code.
pub fn run<I: IntoIterator<Item = String>>(args: I) -> i32 {
    let (args, tols) = match split_tolerances(args.into_iter().collect()) {
        Ok(v) => v,
        Err(e) => return report_error(&e),
    };
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    let mut cfg = match &cli.config {
        Some(path) => match RunConfig::from_json_file(path) {
            Ok(c) => c,
            Err(e) => return report_error(&e),
        },
        None => RunConfig::default(),
    };
    if let Ok(dir) = std::env::var(OUT_ENV) {
        cfg.out_dir = PathBuf::from(dir);
    }
    if let Some(v) = cli.model {
        cfg.model = v;
    }
    if let Some(v) = cli.nodes {
        cfg.n_nodes = v;
    }
    if let Some(v) = cli.seed {
        cfg.seed = v;
    }
    if let Some(v) = cli.max_iter {
        cfg.max_iter = v;
    }
    if let Some(v) = cli.grad_tol {
        cfg.grad_tol = v;
    }
    if let Some(v) = cli.step0 {
        cfg.step0 = v;
    }
    if let Some(v) = cli.pairs {
        cfg.n_pairs = v;
    }
    if let Some(v) = cli.start_amplitude {
        cfg.start_amplitude = v;
    }
    if let Some(v) = cli.out {
        cfg.out_dir = v;
    }
    cfg.tolerances.extend(tols);
    match &cli.command {
        Command::Flow => cmd_flow(&cfg),
        Command::Spectrum { state } => cmd_spectrum(&cfg, state.as_deref()),
        Command::Verify { state } => cmd_verify(&cfg, state.as_deref()),
        Command::Decompose { state } => cmd_decompose(&cfg, state.as_deref()),
    }
}
