//! Symmetry-reduced Fano backends.
//!
//! Both backends are momentum constructions: a Kähler metric in the
//! symmetric sector is encoded by a profile `Θ(y) = |ξ|²` over the moment
//! interval `(a, b)` of the circle action, with `Θ(a) = Θ(b) = 0`,
//! `Θ'(a) = 1`, `Θ'(b) = -1`.
//!
//! * `CP1`: `ℂP¹` with its `S¹`-rotation, `(a, b) = (-1, 1)`, volume weight
//!   `m(y) = 2π`.
//! * `DP1`: the one-point blow-up of `ℂP²` as `ℙ(O ⊕ O(-1))` over `ℂP¹`,
//!   `(a, b) = (1, 3)`, volume weight `m(y) = 8π² y`.
//!
//! Functions are sampled in the moment coordinate `x` of the reference
//! metric `Θ₀(x) = (x - a)(b - x)/2`. A potential `φ(x)` moves the moment
//! coordinate to `y = x + Θ₀ φ'` and the profile to `Θ_φ(y(x)) = Θ₀(x) y'(x)`,
//! so the metric density of `ω_φⁿ` over `ωⁿ` is `m(y) y' / m(x)`.
//!
//! Besides invariant functions (mode 0) the operators also act on the
//! fiber-weight sectors `U = v(x) (b - x)^{|k|} Z^k` (mode `k > 0`) and their
//! conjugates (mode `k < 0`), where `Z` is the holomorphic fiber coordinate;
//! `v` is again sampled at the nodes.

use crate::algebra::{FieldAlgebra, StructureConstants};
use crate::error::{LabError, Result};
use crate::quadrature;
use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

/// Smallest grid the identity suite is meaningful on.
pub const MIN_NODES: usize = 16;

/// Default grid resolution.
pub const DEFAULT_NODES: usize = 128;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ModelId {
    CP1,
    DP1,
}

impl std::fmt::Display for ModelId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            ModelId::CP1 => write!(f, "CP1"),
            ModelId::DP1 => write!(f, "DP1"),
        }
    }
}

impl std::str::FromStr for ModelId {
    type Err = LabError;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_uppercase().as_str() {
            "CP1" => Ok(ModelId::CP1),
            "DP1" => Ok(ModelId::DP1),
            other => Err(LabError::Config(format!("unknown model `{other}`"))),
        }
    }
}

/// Fiber weight of a sector of functions. Mode 0 is the invariant sector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Mode(pub i32);

impl Mode {
    pub const INVARIANT: Mode = Mode(0);

    pub fn weight(self) -> u32 {
        self.0.unsigned_abs()
    }
}

/// A discretised Kähler potential in the symmetric sector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PotentialField {
    pub values: Vec<f64>,
    /// Mean of `φ` against the reference measure; reporting only.
    pub normalization: f64,
}

impl PotentialField {
    pub fn new(geom: &ModelGeometry, values: Vec<f64>) -> Result<Self> {
        geom.check_len(values.len())?;
        let normalization = geom.reference_mean(&values);
        Ok(PotentialField {
            values,
            normalization,
        })
    }

    pub fn zero(geom: &ModelGeometry) -> Self {
        PotentialField {
            values: vec![0.0; geom.n_nodes],
            normalization: 0.0,
        }
    }

    /// `φ + s·δφ`.
    pub fn shifted(&self, geom: &ModelGeometry, dir: &[f64], s: f64) -> Self {
        let values: Vec<f64> = self
            .values
            .iter()
            .zip(dir)
            .map(|(p, d)| p + s * d)
            .collect();
        let normalization = geom.reference_mean(&values);
        PotentialField {
            values,
            normalization,
        }
    }
}

/// Nodal data of `ω_φ` derived from a potential.
#[derive(Debug, Clone)]
pub struct Metric {
    /// Moment coordinate of `ω_φ` at each node.
    pub y: Vec<f64>,
    /// `dy/dx`.
    pub stretch: Vec<f64>,
    /// Density of `ω_φⁿ` relative to `ωⁿ`.
    pub density: Vec<f64>,
    /// Quadrature weights for integration against `ω_φⁿ`.
    pub measure: Vec<f64>,
    /// Profile `Θ_φ` at each node.
    pub profile: Vec<f64>,
    /// `min` over nodes of the stretch and the density.
    pub margin: f64,
}

#[derive(Debug, Clone)]
pub struct ModelGeometry {
    pub model_id: ModelId,
    pub n_nodes: usize,
    /// Interior nodes, strictly increasing.
    pub nodes: Vec<f64>,
    /// Weights for integrating against the reference volume form `ωⁿ`.
    pub quad_weights: Vec<f64>,
    pub reference_volume: f64,
    /// Unnormalised Ricci potential of the reference metric.
    pub ref_ricci_potential: Vec<f64>,
    pub field_algebra: FieldAlgebra,
    pub invariant_sector_dim_hol: usize,
    interval: (f64, f64),
    /// Plain `dx` quadrature weights.
    dx_weights: Vec<f64>,
    theta0: Vec<f64>,
    diff: DMatrix<f64>,
    /// Exponent `d` in `m(y) = m_scale · y^d`.
    base_dim: i32,
    m_scale: f64,
    /// Constant part of the Ricci moment map `κ - Θ_y - dΘ/y`.
    kappa: f64,
}

/// Build a backend at the given resolution.
pub fn make_backend(model_id: ModelId, n_nodes: usize) -> Result<ModelGeometry> {
    ModelGeometry::new(model_id, n_nodes)
}

impl ModelGeometry {
    pub fn new(model_id: ModelId, n_nodes: usize) -> Result<Self> {
        if n_nodes < MIN_NODES {
            return Err(LabError::ResolutionTooLow {
                requested: n_nodes,
                floor: MIN_NODES,
            });
        }
        let (a, b, base_dim, m_scale, kappa, volume, algebra) = match model_id {
            ModelId::CP1 => (-1.0, 1.0, 0, 2.0 * PI, 0.0, 4.0 * PI, FieldAlgebra::sl2()),
            ModelId::DP1 => (
                1.0,
                3.0,
                1,
                8.0 * PI * PI,
                2.0,
                32.0 * PI * PI,
                FieldAlgebra::parabolic_sl3(),
            ),
        };
        let (xi, wi) = quadrature::gauss_legendre(n_nodes);
        let half = 0.5 * (b - a);
        let nodes: Vec<f64> = xi.iter().map(|s| 0.5 * (a + b) + half * s).collect();
        let dx_weights: Vec<f64> = wi.iter().map(|w| w * half).collect();
        let diff = quadrature::differentiation_matrix(&xi, &wi, 1.0 / half);
        let theta0: Vec<f64> = nodes.iter().map(|x| 0.5 * (x - a) * (b - x)).collect();
        let m = |y: f64| m_scale * y.powi(base_dim);
        let quad_weights: Vec<f64> = nodes
            .iter()
            .zip(&dx_weights)
            .map(|(x, w)| w * m(*x))
            .collect();
        let ref_ricci_potential = match model_id {
            ModelId::CP1 => vec![0.0; n_nodes],
            // d f_ref/dx = -1/x for Θ₀ = (x-1)(3-x)/2
            ModelId::DP1 => nodes.iter().map(|x| -x.ln()).collect(),
        };
        Ok(ModelGeometry {
            model_id,
            n_nodes,
            nodes,
            quad_weights,
            reference_volume: volume,
            ref_ricci_potential,
            field_algebra: algebra,
            invariant_sector_dim_hol: 1,
            interval: (a, b),
            dx_weights,
            theta0,
            diff,
            base_dim,
            m_scale,
            kappa,
        })
    }

    pub fn structure_constants(&self) -> &StructureConstants {
        &self.field_algebra.structure_constants
    }

    pub fn field_basis_dim(&self) -> usize {
        self.field_algebra.dim()
    }

    pub fn interval(&self) -> (f64, f64) {
        self.interval
    }

    /// Reference profile `Θ₀` at the nodes.
    pub fn reference_profile(&self) -> &[f64] {
        &self.theta0
    }

    /// Plain `dx` quadrature weights on the moment interval.
    pub fn dx_weights(&self) -> &[f64] {
        &self.dx_weights
    }

    pub fn diff_matrix(&self) -> &DMatrix<f64> {
        &self.diff
    }

    pub(crate) fn check_len(&self, len: usize) -> Result<()> {
        if len != self.n_nodes {
            Err(LabError::LengthMismatch {
                expected: self.n_nodes,
                got: len,
            })
        } else {
            Ok(())
        }
    }

    /// Volume weight `m(y)`; `ωⁿ = m(x) dx` up to the angular factors folded in.
    pub fn volume_weight(&self, y: f64) -> f64 {
        self.m_scale * y.powi(self.base_dim)
    }

    /// `m'(y)/m(y)`.
    fn log_volume_weight_slope(&self, y: f64) -> f64 {
        self.base_dim as f64 / y
    }

    pub fn reference_mean(&self, u: &[f64]) -> f64 {
        let s: f64 = u.iter().zip(&self.quad_weights).map(|(u, w)| u * w).sum();
        s / self.reference_volume
    }

    /// Nodal derivative `d/dx`.
    pub fn derivative(&self, u: &[f64]) -> Vec<f64> {
        // Rows of the matrix sum to zero only up to rounding; centring makes
        // constants differentiate to exactly zero.
        let base = u.first().copied().unwrap_or(0.0);
        let v = &self.diff * DVector::from_iterator(u.len(), u.iter().map(|x| x - base));
        v.as_slice().to_vec()
    }

    /// Weight `s(x)^{|k|}` with `s = (x - a)(b - x)`, carried by mode-`k` sections.
    pub fn sector_weight(&self, mode: Mode) -> Vec<f64> {
        let (a, b) = self.interval;
        let k = mode.weight() as i32;
        self.nodes
            .iter()
            .map(|x| ((x - a) * (b - x)).powi(k))
            .collect()
    }

    /// Derivative matrix acting on mode-`k` amplitudes: `v ↦ v' - |k| v/(b - x)`,
    /// i.e. `(v p)'/p` with `p = (b - x)^{|k|}`.
    pub(crate) fn sector_derivative(&self, mode: Mode) -> DMatrix<f64> {
        let k = mode.weight() as f64;
        let mut d = self.diff.clone();
        if k != 0.0 {
            let b = self.interval.1;
            for (i, x) in self.nodes.iter().enumerate() {
                d[(i, i)] -= k / (b - x);
            }
        }
        d
    }

    /// Geometry of `ω_φ`, rejecting potentials whose metric is not positive.
    pub fn metric(&self, phi: &PotentialField) -> Result<Metric> {
        self.check_len(phi.values.len())?;
        if phi.values.iter().any(|v| !v.is_finite()) {
            return Err(LabError::NonFinite("reading the potential"));
        }
        let dphi = self.derivative(&phi.values);
        let flux: Vec<f64> = self.theta0.iter().zip(&dphi).map(|(t, d)| t * d).collect();
        let dflux = self.derivative(&flux);
        let y: Vec<f64> = self.nodes.iter().zip(&flux).map(|(x, f)| x + f).collect();
        let stretch: Vec<f64> = dflux.iter().map(|d| 1.0 + d).collect();
        let density: Vec<f64> = (0..self.n_nodes)
            .map(|i| self.volume_weight(y[i]) * stretch[i] / self.volume_weight(self.nodes[i]))
            .collect();
        let (mut margin, mut node) = (f64::INFINITY, 0);
        for i in 0..self.n_nodes {
            let m = stretch[i].min(density[i]);
            if m < margin {
                margin = m;
                node = i;
            }
        }
        if !(margin > 0.0) {
            return Err(LabError::NotAdmissible { margin, node });
        }
        let measure: Vec<f64> = (0..self.n_nodes)
            .map(|i| self.dx_weights[i] * self.volume_weight(y[i]) * stretch[i])
            .collect();
        let profile: Vec<f64> = self
            .theta0
            .iter()
            .zip(&stretch)
            .map(|(t, s)| t * s)
            .collect();
        Ok(Metric {
            y,
            stretch,
            density,
            measure,
            profile,
            margin,
        })
    }

    /// Nodewise density of `ω_φⁿ` relative to `ωⁿ`.
    pub fn metric_density(&self, phi: &PotentialField) -> Result<Vec<f64>> {
        Ok(self.metric(phi)?.density)
    }

    /// Stiffness `Dᵀ diag(w) D` of the form `∫ w u' v' dx` for mode `k`.
    pub(crate) fn stiffness(&self, mode: Mode, weight: &[f64]) -> DMatrix<f64> {
        let d = self.sector_derivative(mode);
        let mut wd = d.clone();
        for (i, w) in weight.iter().enumerate() {
            wd.row_mut(i).scale_mut(*w);
        }
        d.transpose() * wd
    }

    /// Matrix of `Δ_φ` on invariant functions (non-positive operator).
    pub(crate) fn laplacian_matrix(&self, metric: &Metric) -> DMatrix<f64> {
        let w: Vec<f64> = (0..self.n_nodes)
            .map(|i| self.dx_weights[i] * self.theta0[i] * self.volume_weight(metric.y[i]))
            .collect();
        let mut k = self.stiffness(Mode::INVARIANT, &w);
        for (i, m) in metric.measure.iter().enumerate() {
            k.row_mut(i).scale_mut(-1.0 / m);
        }
        k
    }

    /// `Δ_φ u` for invariant `u`. Sign: `∫ (-Δ_φ u) ū ω_φⁿ = ∫ |∂̄u|² ω_φⁿ`.
    pub fn laplacian(&self, phi: &PotentialField, u: &[f64]) -> Result<Vec<f64>> {
        self.check_len(u.len())?;
        let metric = self.metric(phi)?;
        let lap = self.laplacian_matrix(&metric);
        Ok((lap * DVector::from_column_slice(u)).as_slice().to_vec())
    }

    /// `Δ_φ` applied to complex nodal data.
    pub fn laplacian_complex(
        &self,
        phi: &PotentialField,
        u: &[Complex64],
    ) -> Result<Vec<Complex64>> {
        let re: Vec<f64> = u.iter().map(|z| z.re).collect();
        let im: Vec<f64> = u.iter().map(|z| z.im).collect();
        let (lr, li) = (self.laplacian(phi, &re)?, self.laplacian(phi, &im)?);
        Ok(lr
            .into_iter()
            .zip(li)
            .map(|(r, i)| Complex64::new(r, i))
            .collect())
    }

    /// Nodal pairings `(⟨∂̄u, ∂̄v⟩, ⟨∂u, ∂v⟩)` of invariant functions, with
    /// `⟨∂̄u, ∂̄v⟩ = g^{ij̄} ∂_j̄ u ∂_i v̄` and `⟨∂u, ∂v⟩ = g^{ij̄} ∂_i u ∂_j̄ v̄`.
    pub fn grad_pairings(
        &self,
        phi: &PotentialField,
        u: &[Complex64],
        v: &[Complex64],
    ) -> Result<(Vec<Complex64>, Vec<Complex64>)> {
        self.check_len(u.len())?;
        self.check_len(v.len())?;
        let metric = self.metric(phi)?;
        let du = complex_derivative(self, u);
        let dv = complex_derivative(self, v);
        let bar: Vec<Complex64> = (0..self.n_nodes)
            .map(|i| du[i] * dv[i].conj() * (self.theta0[i] / metric.stretch[i]))
            .collect();
        // On invariant functions both pairings see only the radial derivative.
        let hol = bar.clone();
        Ok((bar, hol))
    }

    /// Mode-`k` pairings with a real invariant `f`, returned as amplitudes:
    /// `(⟨∂̄U, ∂̄f⟩, ⟨∂U, ∂f⟩) / ((b - x)^{|k|} Z^{(k)})`.
    pub fn grad_pairings_mode(
        &self,
        metric: &Metric,
        mode: Mode,
        v: &[f64],
        f: &[f64],
    ) -> (Vec<f64>, Vec<f64>) {
        let dk = self.sector_derivative(mode);
        let dv = (&dk * DVector::from_column_slice(v)).as_slice().to_vec();
        let df = self.derivative(f);
        let k = mode.0 as f64;
        let mut bar = Vec::with_capacity(self.n_nodes);
        let mut hol = Vec::with_capacity(self.n_nodes);
        for i in 0..self.n_nodes {
            let fy = df[i] / metric.stretch[i];
            let radial = self.theta0[i] * dv[i];
            bar.push(fy * (radial + if k < 0.0 { -k * v[i] } else { 0.0 }));
            hol.push(fy * (radial + if k > 0.0 { k * v[i] } else { 0.0 }));
        }
        (bar, hol)
    }

    /// Holomorphy potentials in the invariant sector, one per representable
    /// element of the field basis, normalised to zero mean against
    /// `e^{f_φ} ω_φⁿ`. The generator's potential is `-(y - ȳ)`.
    pub fn holomorphy_potentials(&self, phi: &PotentialField) -> Result<Vec<Vec<f64>>> {
        let metric = self.metric(phi)?;
        let f = crate::energy::ricci_potential_with(self, phi, &metric)?;
        let weights: Vec<f64> = metric
            .measure
            .iter()
            .zip(&f.values)
            .map(|(m, f)| m * f.exp())
            .collect();
        let total: f64 = weights.iter().sum();
        let mean: f64 = metric
            .y
            .iter()
            .zip(&weights)
            .map(|(y, w)| y * w)
            .sum::<f64>()
            / total;
        Ok(vec![metric.y.iter().map(|y| mean - y).collect()])
    }

    /// Amplitude of the mode-1 holomorphy potential `(y - b) Z`, whose
    /// gradient field is `Z·E` with `E` the Euler field of the fiber.
    pub fn holomorphy_potential_mode_one(&self, metric: &Metric) -> Vec<f64> {
        let b = self.interval.1;
        metric
            .y
            .iter()
            .zip(&self.nodes)
            .map(|(y, x)| (y - b) / (b - x))
            .collect()
    }

    /// Poisson bracket `{f, u} = ⟨∂̄u, ∂̄f⟩ - ⟨∂u, ∂f⟩` of invariant functions.
    pub fn poisson_bracket_with(
        &self,
        phi: &PotentialField,
        f: &[f64],
        u: &[f64],
    ) -> Result<Vec<f64>> {
        let fc: Vec<Complex64> = f.iter().map(|x| Complex64::new(*x, 0.0)).collect();
        let uc: Vec<Complex64> = u.iter().map(|x| Complex64::new(*x, 0.0)).collect();
        let (bar, hol) = self.grad_pairings(phi, &uc, &fc)?;
        Ok(bar.iter().zip(&hol).map(|(a, b)| (a - b).re).collect())
    }

    /// Poisson bracket of a real invariant `f` with a mode-`k` amplitude.
    pub fn poisson_bracket_mode(
        &self,
        metric: &Metric,
        mode: Mode,
        f: &[f64],
        v: &[f64],
    ) -> Vec<f64> {
        let (bar, hol) = self.grad_pairings_mode(metric, mode, v, f);
        bar.iter().zip(&hol).map(|(a, b)| a - b).collect()
    }

    /// Ricci moment map `κ - Θ_y - (m'/m) Θ` of `ω_φ` at the nodes; the
    /// Ricci potential satisfies `Θ₀ f' = ricci_moment - y`.
    pub fn ricci_moment(&self, metric: &Metric) -> Vec<f64> {
        let dprofile = self.derivative(&metric.profile);
        (0..self.n_nodes)
            .map(|i| {
                let theta_y = dprofile[i] / metric.stretch[i];
                self.kappa - theta_y - self.log_volume_weight_slope(metric.y[i]) * metric.profile[i]
            })
            .collect()
    }
}

pub(crate) fn complex_derivative(geom: &ModelGeometry, u: &[Complex64]) -> Vec<Complex64> {
    let re: Vec<f64> = u.iter().map(|z| z.re).collect();
    let im: Vec<f64> = u.iter().map(|z| z.im).collect();
    geom.derivative(&re)
        .into_iter()
        .zip(geom.derivative(&im))
        .map(|(r, i)| Complex64::new(r, i))
        .collect()
}

/// Defects measured by the intrinsic identity suite.
#[derive(Debug, Clone, Copy, Default, Serialize, Deserialize)]
pub struct IdentityDefects {
    /// `|∫ω_φⁿ - V| / V`.
    pub volume: f64,
    /// Relative defect of the weighted integration by parts.
    pub integration_by_parts: f64,
    /// Nodewise defect of `conj⟨∂̄ū, ∂̄v̄⟩ = ⟨∂u, ∂v⟩`.
    pub conjugation: f64,
    /// `|∫ Δ_φ u ω_φⁿ|` relative to `‖u‖`.
    pub mean_zero: f64,
}

impl IdentityDefects {
    pub fn max(self, other: Self) -> Self {
        IdentityDefects {
            volume: self.volume.max(other.volume),
            integration_by_parts: self.integration_by_parts.max(other.integration_by_parts),
            conjugation: self.conjugation.max(other.conjugation),
            mean_zero: self.mean_zero.max(other.mean_zero),
        }
    }

    pub fn passes(&self) -> bool {
        self.volume <= 1e-10
            && self.integration_by_parts <= 1e-9
            && self.conjugation <= 1e-12
            && self.mean_zero <= 1e-10
    }
}

/// One trial of the identity suite at `φ` with test data `u, v` (complex)
/// and weight `f` (real).
pub fn identity_trial(
    geom: &ModelGeometry,
    phi: &PotentialField,
    u: &[Complex64],
    v: &[Complex64],
    f: &[f64],
) -> Result<IdentityDefects> {
    let metric = geom.metric(phi)?;
    let vol: f64 = metric.measure.iter().sum();
    let volume = (vol - geom.reference_volume).abs() / geom.reference_volume;

    let lap = geom.laplacian_complex(phi, u)?;
    let fc: Vec<Complex64> = f.iter().map(|x| Complex64::new(*x, 0.0)).collect();
    let (uf_bar, _) = geom.grad_pairings(phi, u, &fc)?;
    let (uv_bar, _) = geom.grad_pairings(phi, u, v)?;
    let mut lhs = Complex64::new(0.0, 0.0);
    let mut rhs = Complex64::new(0.0, 0.0);
    let mut scale = 0.0;
    for i in 0..geom.n_nodes {
        let w = metric.measure[i] * f[i].exp();
        lhs += (-lap[i] - uf_bar[i]) * v[i].conj() * w;
        rhs += uv_bar[i] * w;
        scale += uv_bar[i].norm() * w;
    }
    let integration_by_parts = (lhs - rhs).norm() / scale.max(f64::MIN_POSITIVE);

    let ubar: Vec<Complex64> = u.iter().map(|z| z.conj()).collect();
    let vbar: Vec<Complex64> = v.iter().map(|z| z.conj()).collect();
    let (bar_of_conj, _) = geom.grad_pairings(phi, &ubar, &vbar)?;
    let (_, hol) = geom.grad_pairings(phi, u, v)?;
    let conjugation = bar_of_conj
        .iter()
        .zip(&hol)
        .map(|(a, b)| (a.conj() - b).norm() / (1.0 + b.norm()))
        .fold(0.0, f64::max);

    let mean: Complex64 = lap.iter().zip(&metric.measure).map(|(l, m)| l * m).sum();
    let unorm: f64 = u
        .iter()
        .zip(&metric.measure)
        .map(|(u, m)| u.norm_sqr() * m)
        .sum::<f64>()
        .sqrt();
    let mean_zero = mean.norm() / unorm.max(f64::MIN_POSITIVE);
    Ok(IdentityDefects {
        volume,
        integration_by_parts,
        conjugation,
        mean_zero,
    })
}
