//! Ricci potential, the H-functional and its descent flow.

use crate::error::{LabError, Result};
use crate::geometry::{Metric, Mode, ModelGeometry, PotentialField};
use crate::operators::{OperatorKind, OperatorMatrix, WeightedData};
use nalgebra::DVector;
use serde::{Deserialize, Serialize};
use std::io::Write;

/// `f_φ` with `Ric(ω_φ) - ω_φ = i∂∂̄f_φ` and `∫ e^{f_φ} ω_φⁿ = V`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RicciPotential {
    pub values: Vec<f64>,
    /// Additive constant enforcing the normalisation.
    pub norm_constant: f64,
}

pub fn ricci_potential(geom: &ModelGeometry, phi: &PotentialField) -> Result<RicciPotential> {
    let metric = geom.metric(phi)?;
    ricci_potential_with(geom, phi, &metric)
}

pub(crate) fn ricci_potential_with(
    geom: &ModelGeometry,
    phi: &PotentialField,
    metric: &Metric,
) -> Result<RicciPotential> {
    let raw: Vec<f64> = (0..geom.n_nodes)
        .map(|i| geom.ref_ricci_potential[i] - metric.density[i].ln() - phi.values[i])
        .collect();
    // c ↦ ∫e^{f̃+c}ω_φⁿ is exponential in c, so the root is explicit.
    let shift = raw.iter().fold(f64::NEG_INFINITY, |m, v| m.max(*v));
    let integral: f64 = raw
        .iter()
        .zip(&metric.measure)
        .map(|(r, m)| (r - shift).exp() * m)
        .sum();
    let norm_constant = (geom.reference_volume / integral).ln() - shift;
    if !norm_constant.is_finite() {
        return Err(LabError::NonFinite("normalising the Ricci potential"));
    }
    let values = raw.iter().map(|r| r + norm_constant).collect();
    Ok(RicciPotential {
        values,
        norm_constant,
    })
}

/// Sup-norm residual of `Θ₀ f' = (Ricci moment) - y`, the ODE form of
/// `Ric(ω_φ) - ω_φ = i∂∂̄f_φ`.
pub fn ricci_residual(
    geom: &ModelGeometry,
    phi: &PotentialField,
    f: &RicciPotential,
) -> Result<f64> {
    let metric = geom.metric(phi)?;
    let df = geom.derivative(&f.values);
    let moment = geom.ricci_moment(&metric);
    let theta0 = geom.reference_profile();
    Ok((0..geom.n_nodes)
        .map(|i| (theta0[i] * df[i] - (moment[i] - metric.y[i])).abs())
        .fold(0.0, f64::max))
}

fn h_from(metric: &Metric, f: &[f64]) -> f64 {
    f.iter()
        .zip(&metric.measure)
        .map(|(f, m)| f * f.exp() * m)
        .sum()
}

/// `H(φ) = ∫ f_φ e^{f_φ} ω_φⁿ`.
pub fn h_value(geom: &ModelGeometry, phi: &PotentialField) -> Result<f64> {
    let metric = geom.metric(phi)?;
    let f = ricci_potential_with(geom, phi, &metric)?;
    Ok(h_from(&metric, &f.values))
}

/// `L_φ f_φ`, the `⟨⟨·,·⟩⟩`-gradient of `H`.
pub fn h_gradient(geom: &ModelGeometry, phi: &PotentialField) -> Result<Vec<f64>> {
    Ok(State::at(geom, phi)?.gradient)
}

/// Linearisation `δf = -Δ_φδφ - δφ + (1/V)∫δφ e^f ω_φⁿ`.
pub fn ricci_potential_variation(
    geom: &ModelGeometry,
    phi: &PotentialField,
    dphi: &[f64],
) -> Result<Vec<f64>> {
    geom.check_len(dphi.len())?;
    let metric = geom.metric(phi)?;
    let f = ricci_potential_with(geom, phi, &metric)?;
    let lap = geom.laplacian(phi, dphi)?;
    let mean: f64 = (0..geom.n_nodes)
        .map(|i| dphi[i] * f.values[i].exp() * metric.measure[i])
        .sum::<f64>()
        / geom.reference_volume;
    Ok((0..geom.n_nodes)
        .map(|i| -lap[i] - dphi[i] + mean)
        .collect())
}

/// Everything the flow needs at one iterate.
pub(crate) struct State {
    pub metric: Metric,
    pub f: RicciPotential,
    pub h: f64,
    pub l: OperatorMatrix,
    pub gradient: Vec<f64>,
    pub grad_norm: f64,
}

impl State {
    pub fn at(geom: &ModelGeometry, phi: &PotentialField) -> Result<State> {
        let metric = geom.metric(phi)?;
        let f = ricci_potential_with(geom, phi, &metric)?;
        let h = h_from(&metric, &f.values);
        let l = WeightedData {
            geom,
            metric: &metric,
            f: &f.values,
        }
        .assemble(Mode::INVARIANT, OperatorKind::L);
        let gradient = l.apply(&f.values);
        let grad_norm = l.norm_of(&gradient);
        Ok(State {
            metric,
            f,
            h,
            l,
            gradient,
            grad_norm,
        })
    }
}

/// Search direction used by [`run_flow`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
pub enum DescentMetric {
    /// `-L_φ f_φ`.
    Weighted,
    /// `-L_φ⁺ f_φ`: the gradient measured in the metric `⟨⟨L² ·,·⟩⟩`, which
    /// coincides with the Newton direction at critical points.
    #[default]
    Preconditioned,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct FlowParams {
    pub max_iter: usize,
    pub grad_tol: f64,
    pub step0: f64,
    #[serde(default)]
    pub descent: DescentMetric,
}

impl Default for FlowParams {
    fn default() -> Self {
        FlowParams {
            max_iter: 500,
            grad_tol: 1e-8,
            step0: 1.0,
            descent: DescentMetric::default(),
        }
    }
}

const ARMIJO: f64 = 1e-4;
const MIN_STEP: f64 = 1e-14;
/// Steps may not push the positivity margin below this fraction of the
/// reference metric's margin (which is 1).
const MARGIN_FLOOR: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FlowRecord {
    pub iter: usize,
    pub h: f64,
    pub grad_norm: f64,
    pub step: f64,
    pub margin: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct FlowTrace {
    pub records: Vec<FlowRecord>,
}

impl FlowTrace {
    /// Largest increase of `H` between consecutive records.
    pub fn max_increase(&self) -> f64 {
        self.records
            .windows(2)
            .map(|w| w[1].h - w[0].h)
            .fold(f64::NEG_INFINITY, f64::max)
    }

    /// CSV with columns `iter,H,grad_norm,step,margin`; floats carry 17
    /// significant digits. `header` lines are written as `#` comments.
    pub fn write_csv<W: Write>(&self, mut out: W, header: &[String]) -> std::io::Result<()> {
        for line in header {
            writeln!(out, "# {line}")?;
        }
        writeln!(out, "iter,H,grad_norm,step,margin")?;
        for r in &self.records {
            writeln!(
                out,
                "{},{:.16e},{:.16e},{:.16e},{:.16e}",
                r.iter, r.h, r.grad_norm, r.step, r.margin
            )?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum FlowStatus {
    Converged,
    MaxIterations,
    LineSearchFailed { iteration: usize, step: f64 },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FlowResult {
    pub phi: PotentialField,
    pub trace: FlowTrace,
    pub status: FlowStatus,
    pub h: f64,
    pub grad_norm: f64,
}

impl FlowResult {
    pub fn converged(&self) -> bool {
        self.status == FlowStatus::Converged
    }

    pub fn iterations(&self) -> usize {
        self.trace.records.last().map_or(0, |r| r.iter)
    }

    /// Turn a non-converged outcome into an error.
    pub fn into_converged(self) -> Result<FlowResult> {
        match self.status {
            FlowStatus::Converged => Ok(self),
            FlowStatus::LineSearchFailed { iteration, step } => {
                Err(LabError::LineSearchFailed { iteration, step })
            }
            FlowStatus::MaxIterations => Err(LabError::NotCritical {
                grad_norm: self.grad_norm,
                threshold: f64::NAN,
            }),
        }
    }
}

fn direction(state: &State, descent: DescentMetric) -> Result<Vec<f64>> {
    match descent {
        DescentMetric::Weighted => Ok(state.gradient.iter().map(|g| -g).collect()),
        DescentMetric::Preconditioned => {
            let (values, vectors) = state.l.eigen()?;
            let norm = values.iter().fold(0.0_f64, |m, l| m.max(l.abs()));
            let tol = 1e-6 * norm;
            let f = DVector::from_column_slice(&state.f.values);
            let gram_f = f.component_mul(&state.l.gram);
            let mut p = DVector::zeros(f.len());
            for (c, l) in values.iter().enumerate() {
                if l.abs() > tol {
                    let q = vectors.column(c);
                    p -= q * (q.dot(&gram_f) / l);
                }
            }
            Ok(p.as_slice().to_vec())
        }
    }
}

/// Descend `H` from `φ₀` with Armijo backtracking (halving) and a
/// positivity guard on every trial step.
pub fn run_flow(
    geom: &ModelGeometry,
    phi0: &PotentialField,
    params: &FlowParams,
) -> Result<FlowResult> {
    let mut phi = phi0.clone();
    let mut state = State::at(geom, &phi)?;
    let mut trace = FlowTrace::default();
    trace.records.push(FlowRecord {
        iter: 0,
        h: state.h,
        grad_norm: state.grad_norm,
        step: 0.0,
        margin: state.metric.margin,
    });
    let mut status = FlowStatus::MaxIterations;
    for iter in 1..=params.max_iter {
        if state.grad_norm <= params.grad_tol {
            status = FlowStatus::Converged;
            break;
        }
        let dir = direction(&state, params.descent)?;
        let slope = state.l.inner(&state.gradient, &dir);
        // Below this, differences of H are quadrature noise.
        let noise = 1e-12 * (geom.reference_volume + state.h.abs());
        let mut step = params.step0;
        let mut accepted = None;
        while step >= MIN_STEP {
            let trial = phi.shifted(geom, &dir, step);
            if let Ok(next) = State::at(geom, &trial) {
                let armijo = next.h <= state.h + ARMIJO * step * slope;
                let within_noise = next.h <= state.h + noise && next.grad_norm < state.grad_norm;
                if next.metric.margin >= MARGIN_FLOOR && (armijo || within_noise) {
                    accepted = Some((trial, next));
                    break;
                }
            }
            step *= 0.5;
        }
        match accepted {
            Some((trial, next)) => {
                phi = trial;
                state = next;
                trace.records.push(FlowRecord {
                    iter,
                    h: state.h,
                    grad_norm: state.grad_norm,
                    step,
                    margin: state.metric.margin,
                });
            }
            None => {
                status = FlowStatus::LineSearchFailed {
                    iteration: iter,
                    step,
                };
                break;
            }
        }
    }
    if status == FlowStatus::MaxIterations && state.grad_norm <= params.grad_tol {
        status = FlowStatus::Converged;
    }
    Ok(FlowResult {
        phi,
        trace,
        status,
        h: state.h,
        grad_norm: state.grad_norm,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{make_backend, ModelId};
    use crate::sample::SmoothSampler;

    #[test]
    fn round_sphere_is_einstein() {
        let g = make_backend(ModelId::CP1, 64).unwrap();
        let phi = PotentialField::zero(&g);
        let f = ricci_potential(&g, &phi).unwrap();
        assert!(f.values.iter().all(|v| v.abs() < 1e-13));
        assert!(h_value(&g, &phi).unwrap().abs() < 1e-12);
        assert!(h_gradient(&g, &phi)
            .unwrap()
            .iter()
            .all(|v| v.abs() < 1e-10));
    }

    #[test]
    fn dp1_reference_is_not_einstein() {
        let g = make_backend(ModelId::DP1, 128).unwrap();
        let phi = PotentialField::zero(&g);
        let f = ricci_potential(&g, &phi).unwrap();
        let spread = f.values.iter().fold(f64::NEG_INFINITY, |m, v| m.max(*v))
            - f.values.iter().fold(f64::INFINITY, |m, v| m.min(*v));
        assert!(spread > 0.5);
        let m = g.metric(&phi).unwrap();
        let vol: f64 = f
            .values
            .iter()
            .zip(&m.measure)
            .map(|(f, w)| f.exp() * w)
            .sum();
        assert!((vol - g.reference_volume).abs() <= 1e-9 * g.reference_volume);
        assert!(ricci_residual(&g, &phi, &f).unwrap() <= 1e-7);
        assert!(h_value(&g, &phi).unwrap() > 0.0);
    }

    #[test]
    fn shift_invariance() {
        for model in [ModelId::CP1, ModelId::DP1] {
            let g = make_backend(model, 64).unwrap();
            let phi = SmoothSampler::new(&g, 1).admissible_potential(0.2);
            let shifted = phi.shifted(&g, &vec![1.0; 64], 0.7);
            let (f1, f2) = (
                ricci_potential(&g, &phi).unwrap(),
                ricci_potential(&g, &shifted).unwrap(),
            );
            for (a, b) in f1.values.iter().zip(&f2.values) {
                assert!((a - b).abs() <= 1e-12);
            }
            assert!((h_value(&g, &phi).unwrap() - h_value(&g, &shifted).unwrap()).abs() <= 1e-12);
            let (g1, g2) = (
                h_gradient(&g, &phi).unwrap(),
                h_gradient(&g, &shifted).unwrap(),
            );
            let err = g1
                .iter()
                .zip(&g2)
                .fold(0.0_f64, |m, (a, b)| m.max((a - b).abs()));
            let scale = g1.iter().fold(0.0_f64, |m, a| m.max(a.abs()));
            // Rounding in f at the 1e-13 level is amplified by ‖L‖.
            let lnorm = State::at(&g, &phi).unwrap().l.operator_norm();
            let fsup = f1.values.iter().fold(0.0_f64, |m, a| m.max(a.abs()));
            assert!(
                err <= 1e-12 * lnorm * (1.0 + fsup),
                "{model}: {err:e} (grad {scale:e})"
            );
        }
    }

    #[test]
    fn residuals_and_positivity_on_random_potentials() {
        for model in [ModelId::CP1, ModelId::DP1] {
            let g = make_backend(model, 128).unwrap();
            let mut s = SmoothSampler::new(&g, 21);
            for _ in 0..5 {
                let phi = s.admissible_potential(0.2);
                let f = ricci_potential(&g, &phi).unwrap();
                assert!(ricci_residual(&g, &phi, &f).unwrap() <= 1e-7);
                assert!(h_value(&g, &phi).unwrap() >= -1e-10);
                // gradient is mean-zero against e^f ω_φⁿ
                let m = g.metric(&phi).unwrap();
                let grad = h_gradient(&g, &phi).unwrap();
                let mean: f64 = (0..g.n_nodes)
                    .map(|i| grad[i] * f.values[i].exp() * m.measure[i])
                    .sum();
                assert!(mean.abs() <= 1e-10 * g.reference_volume);
            }
        }
    }

    #[test]
    fn variation_of_constant_vanishes_and_is_mean_free() {
        let g = make_backend(ModelId::DP1, 64).unwrap();
        let mut s = SmoothSampler::new(&g, 2);
        let phi = s.admissible_potential(0.1);
        let dv = ricci_potential_variation(&g, &phi, &vec![1.0; 64]).unwrap();
        assert!(dv.iter().all(|v| v.abs() < 1e-9));
        let dphi = s.direction(1.0);
        let dv = ricci_potential_variation(&g, &phi, &dphi).unwrap();
        let lap = g.laplacian(&phi, &dphi).unwrap();
        let f = ricci_potential(&g, &phi).unwrap();
        let m = g.metric(&phi).unwrap();
        let mean: f64 = (0..64)
            .map(|i| (dv[i] + lap[i]) * f.values[i].exp() * m.measure[i])
            .sum();
        assert!(mean.abs() < 1e-12 * g.reference_volume);
    }

    #[test]
    fn variation_matches_central_differences_at_second_order() {
        let g = make_backend(ModelId::DP1, 128).unwrap();
        let mut s = SmoothSampler::new(&g, 9);
        let phi = s.admissible_potential(0.15);
        let dphi = s.direction(1.0);
        let exact = ricci_potential_variation(&g, &phi, &dphi).unwrap();
        let err = |h: f64| {
            let p = ricci_potential(&g, &phi.shifted(&g, &dphi, h))
                .unwrap()
                .values;
            let m = ricci_potential(&g, &phi.shifted(&g, &dphi, -h))
                .unwrap()
                .values;
            (0..g.n_nodes)
                .map(|i| ((p[i] - m[i]) / (2.0 * h) - exact[i]).abs())
                .fold(0.0, f64::max)
        };
        let (e1, e2) = (err(1e-2), err(5e-3));
        let slope = (e1 / e2).log2();
        assert!((slope - 2.0).abs() < 0.1, "slope {slope} ({e1:e}, {e2:e})");
    }

    #[test]
    fn critical_start_returns_immediately() {
        let g = make_backend(ModelId::CP1, 64).unwrap();
        let out = run_flow(&g, &PotentialField::zero(&g), &FlowParams::default()).unwrap();
        assert!(out.converged());
        assert_eq!(out.iterations(), 0);
    }

    #[test]
    fn weighted_descent_is_monotone() {
        let g = make_backend(ModelId::CP1, 32).unwrap();
        let phi0 = SmoothSampler::new(&g, 4).admissible_potential(0.2);
        let params = FlowParams {
            max_iter: 20,
            descent: DescentMetric::Weighted,
            ..FlowParams::default()
        };
        let out = run_flow(&g, &phi0, &params).unwrap();
        assert!(out.trace.records.len() > 1);
        assert!(out.trace.max_increase() <= 0.0);
        assert!(out.h < out.trace.records[0].h);
    }

    #[test]
    fn csv_has_fixed_columns() {
        let trace = FlowTrace {
            records: vec![FlowRecord {
                iter: 0,
                h: 0.1,
                grad_norm: 2.0,
                step: 0.0,
                margin: 1.0,
            }],
        };
        let mut buf = Vec::new();
        trace.write_csv(&mut buf, &["model=CP1".into()]).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "# model=CP1");
        assert_eq!(lines[1], "iter,H,grad_norm,step,margin");
        assert_eq!(lines[2], "0,1.0000000000000001e-1,2.0000000000000000e0,0.0000000000000000e0,1.0000000000000000e0");
    }
}
