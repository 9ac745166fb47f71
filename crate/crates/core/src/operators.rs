//! Dense discretisations of `L_φ`, `L̄_φ` and the weighted Laplacian.
//!
//! Operators are assembled in weak form. For a mode-`k` sector the weighted
//! Dirichlet form is
//!
//! ```text
//! Q(v, w) = ∫ Θ₀ m(y) e^f s^{|k|} (D_k v)(D_k w) dx,   D_k = d/dx - |k|/(b - x)
//! ```
//!
//! and the Gram form is `⟨⟨v, w⟩⟩ = ∫ v w̄ s^{|k|} e^f ω_φⁿ`. With Gauss
//! quadrature both become matrices `K = D_kᵀ diag(κ) D_k` and a positive
//! diagonal `G`, so the weighted Laplacian `G⁻¹K` is exactly `G`-self-adjoint
//! at the discrete level. On invariant functions the mean term
//! `(1/V)∫u e^f ω_φⁿ` is added, and on negative modes the drift picks up the
//! multiplication term `-|k| f_y`.
//!
//! `L̄` on mode `k` equals `L` on mode `-k`: conjugation swaps the sectors and
//! the operators have real coefficients in the amplitude representation.

use crate::error::{LabError, Result};
use crate::geometry::{Metric, Mode, ModelGeometry, PotentialField};
use nalgebra::{DMatrix, DVector, SymmetricEigen};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum OperatorKind {
    L,
    Lbar,
    WeightedLaplacian,
}

/// A sector operator with the diagonal Gram matrix of `⟨⟨·,·⟩⟩`.
#[derive(Debug, Clone)]
pub struct OperatorMatrix {
    pub matrix: DMatrix<f64>,
    /// Diagonal of the Gram matrix.
    pub gram: DVector<f64>,
    pub kind: OperatorKind,
    pub mode: Mode,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct Cluster {
    pub value: f64,
    pub multiplicity: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SpectrumReport {
    pub eigenvalues: Vec<f64>,
    pub clusters: Vec<Cluster>,
    /// Gram-orthonormal eigenvectors, one per eigenvalue.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub basis: Option<Vec<Vec<f64>>>,
    /// `‖Av - λv‖` in the Gram norm.
    pub residuals: Vec<f64>,
    pub operator_norm: f64,
}

impl SpectrumReport {
    /// JSON value, eigenvectors included only on request.
    pub fn to_json(&self, include_vectors: bool) -> serde_json::Value {
        let mut r = self.clone();
        if !include_vectors {
            r.basis = None;
        }
        serde_json::to_value(r).expect("spectrum serialises")
    }

    pub fn max_residual(&self) -> f64 {
        self.residuals.iter().fold(0.0, |m, r| m.max(*r))
    }

    /// Smallest eigenvalue whose magnitude exceeds `floor`.
    pub fn smallest_above(&self, floor: f64) -> Option<f64> {
        self.eigenvalues.iter().copied().find(|l| *l > floor)
    }

    pub fn multiplicity_near(&self, value: f64, tol: f64) -> usize {
        self.eigenvalues
            .iter()
            .filter(|l| (*l - value).abs() <= tol)
            .count()
    }
}

/// Null space of `L` in one sector.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Kernel {
    pub mode: Mode,
    pub dimension: usize,
    /// Gram-orthonormal basis.
    pub basis: Vec<Vec<f64>>,
    pub tolerance: f64,
    /// First eigenvalue magnitude outside the kernel.
    pub gap: f64,
    /// Set when the gap is within a factor 100 of the tolerance.
    pub warning: Option<String>,
}

/// Inputs shared by every assembly at a fixed `(φ, f)`.
pub(crate) struct WeightedData<'a> {
    pub geom: &'a ModelGeometry,
    pub metric: &'a Metric,
    pub f: &'a [f64],
}

impl WeightedData<'_> {
    fn gram(&self, mode: Mode) -> DVector<f64> {
        let s = self.geom.sector_weight(mode);
        DVector::from_iterator(
            self.geom.n_nodes,
            (0..self.geom.n_nodes).map(|i| self.metric.measure[i] * self.f[i].exp() * s[i]),
        )
    }

    /// Weighted Laplacian `u ↦ -Δu - ⟨∂̄u, ∂̄f⟩` on mode `k`.
    fn weighted_laplacian(&self, mode: Mode) -> (DMatrix<f64>, DVector<f64>) {
        let g = self.geom;
        let n = g.n_nodes;
        let s = g.sector_weight(mode);
        let theta0 = g.reference_profile();
        let dxw = g.dx_weights();
        let kappa: Vec<f64> = (0..n)
            .map(|i| {
                dxw[i] * theta0[i] * g.volume_weight(self.metric.y[i]) * self.f[i].exp() * s[i]
            })
            .collect();
        let mut k = g.stiffness(mode, &kappa);
        if mode.0 < 0 {
            let df = g.derivative(self.f);
            let kw = mode.weight() as f64;
            for i in 0..n {
                k[(i, i)] -= kw
                    * dxw[i]
                    * df[i]
                    * g.volume_weight(self.metric.y[i])
                    * self.f[i].exp()
                    * s[i];
            }
        }
        let gram = self.gram(mode);
        for i in 0..n {
            k.row_mut(i).scale_mut(1.0 / gram[i]);
        }
        (k, gram)
    }

    pub fn assemble(&self, mode: Mode, kind: OperatorKind) -> OperatorMatrix {
        let sector = match kind {
            OperatorKind::Lbar => Mode(-mode.0),
            _ => mode,
        };
        let (mut a, gram) = self.weighted_laplacian(sector);
        if kind != OperatorKind::WeightedLaplacian {
            let n = self.geom.n_nodes;
            for i in 0..n {
                a[(i, i)] -= 1.0;
            }
            if mode == Mode::INVARIANT {
                let inv_v = 1.0 / self.geom.reference_volume;
                for i in 0..n {
                    for j in 0..n {
                        a[(i, j)] += inv_v * gram[j];
                    }
                }
            }
        }
        OperatorMatrix {
            matrix: a,
            gram,
            kind,
            mode,
        }
    }
}

impl OperatorMatrix {
    pub fn dim(&self) -> usize {
        self.gram.len()
    }

    pub fn apply(&self, u: &[f64]) -> Vec<f64> {
        (&self.matrix * DVector::from_column_slice(u))
            .as_slice()
            .to_vec()
    }

    pub fn gram_matrix(&self) -> DMatrix<f64> {
        DMatrix::from_diagonal(&self.gram)
    }

    pub fn inner(&self, u: &[f64], v: &[f64]) -> f64 {
        u.iter()
            .zip(v)
            .zip(self.gram.iter())
            .map(|((a, b), g)| a * b * g)
            .sum()
    }

    pub fn norm_of(&self, u: &[f64]) -> f64 {
        self.inner(u, u).sqrt()
    }

    /// `‖GA - (GA)ᵀ‖_F / ‖GA‖_F`.
    pub fn adjointness_defect(&self) -> f64 {
        let ga = self.gram_matrix() * &self.matrix;
        let defect = (&ga - ga.transpose()).norm();
        defect / ga.norm().max(f64::MIN_POSITIVE)
    }

    /// `G^{1/2} A G^{-1/2}`, symmetrised.
    pub fn symmetrized(&self) -> DMatrix<f64> {
        let n = self.dim();
        let sq: Vec<f64> = self.gram.iter().map(|g| g.sqrt()).collect();
        let s = DMatrix::from_fn(n, n, |i, j| sq[i] * self.matrix[(i, j)] / sq[j]);
        (&s + s.transpose()) * 0.5
    }

    pub(crate) fn eigen(&self) -> Result<(Vec<f64>, DMatrix<f64>)> {
        let s = self.symmetrized();
        if s.iter().any(|v| !v.is_finite()) {
            return Err(LabError::Eigensolver(format!(
                "non-finite operator entries (max |a_ij| = {:e})",
                self.matrix.amax()
            )));
        }
        let eig = SymmetricEigen::new(s);
        let mut order: Vec<usize> = (0..self.dim()).collect();
        order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
        let values: Vec<f64> = order.iter().map(|&i| eig.eigenvalues[i]).collect();
        let vectors = DMatrix::from_fn(self.dim(), self.dim(), |r, c| {
            eig.eigenvectors[(r, order[c])] / self.gram[r].sqrt()
        });
        Ok((values, vectors))
    }

    /// Operator norm in the Gram norm (largest eigenvalue magnitude).
    pub fn operator_norm(&self) -> f64 {
        match self.eigen() {
            Ok((v, _)) => v.iter().fold(0.0_f64, |m, l| m.max(l.abs())),
            Err(_) => f64::NAN,
        }
    }

    pub fn min_symmetrized_eigenvalue(&self) -> Result<f64> {
        Ok(self.eigen()?.0[0])
    }

    /// Full spectrum with clusters at `cluster_tol` (default `1e-5 ·` range).
    pub fn spectrum(&self, cluster_tol: Option<f64>) -> Result<SpectrumReport> {
        let (values, vectors) = self.eigen()?;
        let range = values[values.len() - 1] - values[0];
        let tol = cluster_tol.unwrap_or(1e-5 * range);
        let clusters = cluster_sorted(&values, tol);
        let mut residuals = Vec::with_capacity(values.len());
        let mut basis = Vec::with_capacity(values.len());
        for (c, lambda) in values.iter().enumerate() {
            let v: Vec<f64> = vectors.column(c).iter().copied().collect();
            let av = self.apply(&v);
            let r: Vec<f64> = av.iter().zip(&v).map(|(a, b)| a - lambda * b).collect();
            residuals.push(self.norm_of(&r));
            basis.push(v);
        }
        let operator_norm = values.iter().fold(0.0_f64, |m, l| m.max(l.abs()));
        Ok(SpectrumReport {
            eigenvalues: values,
            clusters,
            basis: Some(basis),
            residuals,
            operator_norm,
        })
    }
}

/// Group ascending `values` into runs whose consecutive gaps are `≤ tol`.
pub(crate) fn cluster_sorted(values: &[f64], tol: f64) -> Vec<Cluster> {
    let mut clusters = Vec::new();
    let mut start = 0;
    for i in 1..=values.len() {
        if i == values.len() || values[i] - values[i - 1] > tol {
            let group = &values[start..i];
            clusters.push(Cluster {
                value: group.iter().sum::<f64>() / group.len() as f64,
                multiplicity: group.len(),
            });
            start = i;
        }
    }
    clusters
}

fn data_for<'a>(
    geom: &'a ModelGeometry,
    metric: &'a Metric,
    f: &'a [f64],
) -> Result<WeightedData<'a>> {
    geom.check_len(f.len())?;
    Ok(WeightedData { geom, metric, f })
}

/// Matrix of `L_φ` on mode `k` with drift `f` (normally the Ricci potential).
pub fn assemble_l(
    geom: &ModelGeometry,
    phi: &PotentialField,
    f: &[f64],
    mode: Mode,
) -> Result<OperatorMatrix> {
    let metric = geom.metric(phi)?;
    Ok(data_for(geom, &metric, f)?.assemble(mode, OperatorKind::L))
}

/// Matrix of `L̄_φ` on mode `k`.
pub fn assemble_lbar(
    geom: &ModelGeometry,
    phi: &PotentialField,
    f: &[f64],
    mode: Mode,
) -> Result<OperatorMatrix> {
    let metric = geom.metric(phi)?;
    Ok(data_for(geom, &metric, f)?.assemble(mode, OperatorKind::Lbar))
}

pub fn assemble_weighted_laplacian(
    geom: &ModelGeometry,
    phi: &PotentialField,
    f: &[f64],
    mode: Mode,
) -> Result<OperatorMatrix> {
    let metric = geom.metric(phi)?;
    Ok(data_for(geom, &metric, f)?.assemble(mode, OperatorKind::WeightedLaplacian))
}

/// `⟨⟨u, v⟩⟩ = ∫ u v̄ e^f ω_φⁿ` on invariant functions.
pub fn weighted_inner(
    geom: &ModelGeometry,
    phi: &PotentialField,
    f: &[f64],
    u: &[Complex64],
    v: &[Complex64],
) -> Result<Complex64> {
    geom.check_len(u.len())?;
    geom.check_len(v.len())?;
    geom.check_len(f.len())?;
    let metric = geom.metric(phi)?;
    Ok((0..geom.n_nodes)
        .map(|i| u[i] * v[i].conj() * (metric.measure[i] * f[i].exp()))
        .sum())
}

/// Spectrum of the invariant-sector weighted Laplacian `-Δu - ⟨∂̄u, ∂̄f⟩`.
pub fn weighted_laplacian_spectrum(
    geom: &ModelGeometry,
    phi: &PotentialField,
    f: &[f64],
) -> Result<SpectrumReport> {
    assemble_weighted_laplacian(geom, phi, f, Mode::INVARIANT)?.spectrum(None)
}

/// Eigenvectors of `L` with `|λ| ≤ tol` (default `1e-6 · ‖L‖`).
pub fn kernel_of_l(
    geom: &ModelGeometry,
    phi: &PotentialField,
    f: &[f64],
    mode: Mode,
    tol: Option<f64>,
) -> Result<Kernel> {
    kernel_of(&assemble_l(geom, phi, f, mode)?, tol)
}

pub fn kernel_of(op: &OperatorMatrix, tol: Option<f64>) -> Result<Kernel> {
    let (values, vectors) = op.eigen()?;
    let norm = values.iter().fold(0.0_f64, |m, l| m.max(l.abs()));
    let tol = tol.unwrap_or(1e-6 * norm);
    let mut basis = Vec::new();
    let mut gap = f64::INFINITY;
    for (c, l) in values.iter().enumerate() {
        if l.abs() <= tol {
            basis.push(vectors.column(c).iter().copied().collect());
        } else {
            gap = gap.min(l.abs());
        }
    }
    let warning = (gap < 100.0 * tol)
        .then(|| format!("spectral gap {gap:e} is close to kernel tolerance {tol:e}"));
    Ok(Kernel {
        mode: op.mode,
        dimension: basis.len(),
        basis,
        tolerance: tol,
        gap,
        warning,
    })
}

/// Commutator `[L, L̄]` in one sector, with `‖L‖` for normalisation.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct CommutatorNorm {
    pub mode: Mode,
    pub norm: f64,
    pub l_norm: f64,
}

impl CommutatorNorm {
    /// `‖[L, L̄]‖ / ‖L‖²`.
    pub fn relative(&self) -> f64 {
        self.norm / (self.l_norm * self.l_norm)
    }
}

/// Gram-operator norm of `L L̄ - L̄ L` on mode `k`.
pub fn commutator_norm(
    geom: &ModelGeometry,
    phi: &PotentialField,
    f: &[f64],
    mode: Mode,
) -> Result<CommutatorNorm> {
    let metric = geom.metric(phi)?;
    let data = data_for(geom, &metric, f)?;
    let l = data.assemble(mode, OperatorKind::L);
    let lbar = data.assemble(mode, OperatorKind::Lbar);
    let c = &l.matrix * &lbar.matrix - &lbar.matrix * &l.matrix;
    let n = l.dim();
    let sq: Vec<f64> = l.gram.iter().map(|g| g.sqrt()).collect();
    let sym = DMatrix::from_fn(n, n, |i, j| sq[i] * c[(i, j)] / sq[j]);
    let norm = sym
        .singular_values()
        .iter()
        .fold(0.0, |m: f64, s| m.max(*s));
    Ok(CommutatorNorm {
        mode,
        norm,
        l_norm: l.operator_norm(),
    })
}
