//! Eigenspace decomposition of `h(X)` under `ad(-grad f)` at a soliton.
//!
//! The soliton field is read off by fitting `f` against the representable
//! holomorphy potentials. Its adjoint action is then built from the exact
//! structure constants, so the only numerical input to the Lie-algebra side
//! is the fitted coefficient. The function-space side is checked separately
//! by restricting `L̄` to `ker L` sector by sector.

use crate::algebra::FieldAlgebra;
use crate::energy::ricci_potential;
use crate::error::{LabError, Result};
use crate::geometry::{Mode, ModelGeometry, PotentialField};
use crate::operators::{assemble_l, assemble_lbar, cluster_sorted, Kernel, SpectrumReport};
use crate::variation::CheckReport;
use nalgebra::{DMatrix, DVector, SymmetricEigen};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

/// Fit residual above which `f` is not treated as a holomorphy potential.
pub const SOLITON_GATE: f64 = 1e-4;
pub const STRUCTURE_TOL: f64 = 1e-8;
/// Relative cluster width for ad-eigenvalues.
pub const CLUSTER_REL_TOL: f64 = 1e-5;
/// Absolute cluster width used when every eigenvalue vanishes.
const CLUSTER_ABS_FLOOR: f64 = 1e-12;
const PROJECTION_TOL: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolitonFit {
    /// Coefficients of `grad f` on the field basis.
    pub coefficients: Vec<f64>,
    /// Additive constant of the fit.
    pub constant: f64,
    /// `‖f - fit‖∞`.
    pub residual: f64,
}

/// Fit `f ≈ constant + Σ cᵢ uᵢ` in `⟨⟨·,·⟩⟩`, `uᵢ` the invariant-sector
/// holomorphy potentials, and reject residuals above [`SOLITON_GATE`].
pub fn soliton_field_coefficients(
    geom: &ModelGeometry,
    phi: &PotentialField,
    f: &[f64],
) -> Result<SolitonFit> {
    geom.check_len(f.len())?;
    let metric = geom.metric(phi)?;
    let potentials = geom.holomorphy_potentials(phi)?;
    let n = geom.n_nodes;
    let w: Vec<f64> = (0..n)
        .map(|i| (metric.measure[i] * f[i].exp()).sqrt())
        .collect();
    let cols = potentials.len() + 1;
    let a = DMatrix::from_fn(n, cols, |i, j| {
        w[i] * if j == 0 { 1.0 } else { potentials[j - 1][i] }
    });
    let rhs = DVector::from_iterator(n, (0..n).map(|i| w[i] * f[i]));
    let sol = a
        .svd(true, true)
        .solve(&rhs, 1e-14)
        .map_err(|e| LabError::Eigensolver(e.to_string()))?;
    let residual = (0..n)
        .map(|i| {
            let fit = sol[0]
                + (1..cols)
                    .map(|j| sol[j] * potentials[j - 1][i])
                    .sum::<f64>();
            (f[i] - fit).abs()
        })
        .fold(0.0_f64, f64::max);
    if !(residual <= SOLITON_GATE) {
        return Err(LabError::NotSoliton {
            residual,
            threshold: SOLITON_GATE,
        });
    }
    let mut coefficients = vec![0.0; geom.field_basis_dim()];
    // The invariant sector carries exactly the generator's potential.
    coefficients[geom.field_algebra.generator] = sol[1];
    Ok(SolitonFit {
        coefficients,
        constant: sol[0],
        residual,
    })
}

/// Coefficient of the soliton field on the cohomogeneity-one generator.
pub(crate) fn generator_coefficient(geom: &ModelGeometry, phi: &PotentialField) -> Result<f64> {
    let f = ricci_potential(geom, phi)?;
    Ok(
        soliton_field_coefficients(geom, phi, &f.values)?.coefficients
            [geom.field_algebra.generator],
    )
}

/// Matrix of `X ↦ [-Σ cᵢ eᵢ, X]` on the field basis.
pub fn ad_action_matrix(geom: &ModelGeometry, coeffs: &[f64]) -> DMatrix<f64> {
    -geom.structure_constants().ad_matrix(coeffs)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LambdaBlock {
    pub lambda: f64,
    pub multiplicity: usize,
    /// Orthonormal coordinates (on the field basis) of the generalised
    /// eigenspace.
    pub basis: Vec<Vec<f64>>,
    /// Largest singular value of `(A - λ)^m` discarded into the block.
    pub residual: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AdActionResult {
    pub soliton: SolitonFit,
    pub ad_matrix: Vec<Vec<f64>>,
    pub spectrum: SpectrumReport,
    pub max_imaginary: f64,
    pub lambda_blocks: Vec<LambdaBlock>,
    /// Worst component of `[h_λ, h_μ]` outside `h_{λ+μ}`.
    pub grading_defect: f64,
    /// `‖ad(-Z) Z‖` for the soliton field `Z`.
    pub field_in_h0: f64,
}

impl AdActionResult {
    pub fn block(&self, lambda: f64, tol: f64) -> Option<&LambdaBlock> {
        self.lambda_blocks
            .iter()
            .find(|b| (b.lambda - lambda).abs() <= tol)
    }

    pub fn zero_block(&self) -> Option<&LambdaBlock> {
        self.lambda_blocks
            .iter()
            .min_by(|a, b| a.lambda.abs().total_cmp(&b.lambda.abs()))
    }
}

fn orthonormal_projection_defect(basis: &[Vec<f64>], v: &[f64]) -> f64 {
    let mut r = v.to_vec();
    for b in basis {
        let c: f64 = b.iter().zip(v).map(|(x, y)| x * y).sum();
        r.iter_mut().zip(b).for_each(|(ri, bi)| *ri -= c * bi);
    }
    r.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Fit, adjoint action, spectrum, generalised eigenspaces and grading.
pub fn decompose(geom: &ModelGeometry, phi: &PotentialField) -> Result<AdActionResult> {
    let f = ricci_potential(geom, phi)?;
    let soliton = soliton_field_coefficients(geom, phi, &f.values)?;
    let a = ad_action_matrix(geom, &soliton.coefficients);
    let d = a.nrows();

    let eig = a.complex_eigenvalues();
    let max_imaginary = eig.iter().fold(0.0_f64, |m, z| m.max(z.im.abs()));
    let mut values: Vec<f64> = eig.iter().map(|z| z.re).collect();
    values.sort_by(f64::total_cmp);
    let scale = values.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
    let tol = (CLUSTER_REL_TOL * scale).max(CLUSTER_ABS_FLOOR);
    let clusters = cluster_sorted(&values, tol);

    let mut blocks = Vec::with_capacity(clusters.len());
    for c in &clusters {
        let shifted = &a - DMatrix::identity(d, d) * c.value;
        let mut power = DMatrix::identity(d, d);
        for _ in 0..c.multiplicity {
            power = &power * &shifted;
        }
        let svd = power.svd(false, true);
        let v_t = svd.v_t.as_ref().expect("requested right singular vectors");
        let mut order: Vec<usize> = (0..d).collect();
        order.sort_by(|&i, &j| svd.singular_values[i].total_cmp(&svd.singular_values[j]));
        let chosen = &order[..c.multiplicity];
        blocks.push(LambdaBlock {
            lambda: c.value,
            multiplicity: c.multiplicity,
            basis: chosen
                .iter()
                .map(|&r| v_t.row(r).iter().copied().collect())
                .collect(),
            residual: chosen
                .iter()
                .map(|&r| svd.singular_values[r])
                .fold(0.0_f64, f64::max),
        });
    }

    let sc = geom.structure_constants();
    let mut grading_defect = 0.0_f64;
    for bi in &blocks {
        for bj in &blocks {
            let target = blocks
                .iter()
                .find(|b| (b.lambda - (bi.lambda + bj.lambda)).abs() <= tol);
            for x in &bi.basis {
                for y in &bj.basis {
                    let br = sc.bracket(x, y);
                    let defect = match target {
                        Some(t) => orthonormal_projection_defect(&t.basis, &br),
                        None => br.iter().map(|v| v * v).sum::<f64>().sqrt(),
                    };
                    grading_defect = grading_defect.max(defect);
                }
            }
        }
    }

    let z = &soliton.coefficients;
    let az = &a * DVector::from_column_slice(z);
    let field_in_h0 = az.norm();

    let residuals = blocks
        .iter()
        .flat_map(|b| std::iter::repeat_n(b.residual, b.multiplicity))
        .collect();
    let spectrum = SpectrumReport {
        eigenvalues: values,
        clusters,
        basis: None,
        residuals,
        operator_norm: a.norm(),
    };
    let ad_matrix = (0..d).map(|i| a.row(i).iter().copied().collect()).collect();
    Ok(AdActionResult {
        soliton,
        ad_matrix,
        spectrum,
        max_imaginary,
        lambda_blocks: blocks,
        grading_defect,
        field_in_h0,
    })
}

fn numerical_rank(m: &DMatrix<f64>, rel: f64) -> (usize, DMatrix<f64>, Vec<f64>) {
    let svd = m.clone().svd(true, false);
    let top = svd.singular_values.iter().fold(0.0_f64, |a, s| a.max(*s));
    let keep: Vec<usize> = (0..svd.singular_values.len())
        .filter(|&i| svd.singular_values[i] > rel * top.max(1.0))
        .collect();
    let u = svd.u.expect("requested left singular vectors");
    let cols = DMatrix::from_fn(m.nrows(), keep.len(), |r, c| u[(r, keep[c])]);
    (
        keep.len(),
        cols,
        svd.singular_values.iter().copied().collect(),
    )
}

/// Closure, conjugation stability and reductivity diagnostics of `h₀`.
///
/// `relative_error` is the worst of the closure and conjugation defects, or
/// `1` when the centre and derived algebra fail to span `h₀` or the Killing
/// form degenerates on the derived algebra.
pub fn check_h0_structure(geom: &ModelGeometry, result: &AdActionResult) -> CheckReport {
    let algebra: &FieldAlgebra = &geom.field_algebra;
    let sc = geom.structure_constants();
    let mut report = CheckReport::named("h0_structure", "h0_structure", STRUCTURE_TOL);
    let Some(block) = result
        .zero_block()
        .filter(|b| b.lambda.abs() <= STRUCTURE_TOL)
    else {
        return report.finish(1.0);
    };
    let basis = &block.basis;
    let m = basis.len();
    let d = algebra.dim();

    // Brackets in h₀ coordinates; the basis is orthonormal.
    let coords = |v: &[f64]| -> Vec<f64> {
        basis
            .iter()
            .map(|b| b.iter().zip(v).map(|(x, y)| x * y).sum())
            .collect()
    };
    let mut closure = 0.0_f64;
    let mut bracket_coords = vec![vec![Vec::new(); m]; m];
    for i in 0..m {
        for j in 0..m {
            let br = sc.bracket(&basis[i], &basis[j]);
            closure = closure.max(orthonormal_projection_defect(basis, &br));
            bracket_coords[i][j] = coords(&br);
        }
    }

    // Conjugation: −Xᴴ must lie in the complex span of the realised block.
    let realised: Vec<DMatrix<Complex64>> = basis
        .iter()
        .map(|b| {
            algebra.realise(
                &b.iter()
                    .map(|x| Complex64::new(*x, 0.0))
                    .collect::<Vec<_>>(),
            )
        })
        .collect();
    let size = realised[0].nrows();
    let span = DMatrix::from_fn(size * size, m, |r, c| realised[c][(r % size, r / size)]);
    let mut conjugation = 0.0_f64;
    for x in &realised {
        let cx = FieldAlgebra::conjugation(x);
        let target = DVector::from_iterator(
            size * size,
            (0..size * size).map(|r| cx[(r % size, r / size)]),
        );
        let sol = span
            .clone()
            .svd(true, true)
            .solve(&target, 1e-14)
            .expect("svd solve");
        let resid = (&span * sol - &target).norm() / target.norm().max(f64::MIN_POSITIVE);
        conjugation = conjugation.max(resid);
    }

    // Centre: kernel of α ↦ ([Σαᵢbᵢ, b_j])_j.
    let center_map = DMatrix::from_fn(m * m, m, |r, i| bracket_coords[i][r / m][r % m]);
    let (center_rank, _, _) = numerical_rank(&center_map, STRUCTURE_TOL);
    let center_dim = m - center_rank;
    // Derived algebra: span of all brackets.
    let derived_span = DMatrix::from_fn(m, m * m, |k, r| bracket_coords[r / m][r % m][k]);
    let (derived_dim, derived_basis, _) = numerical_rank(&derived_span, STRUCTURE_TOL);

    // Killing form of h₀ on its own coordinates.
    let ad = |i: usize| DMatrix::from_fn(m, m, |k, j| bracket_coords[i][j][k]);
    let ads: Vec<DMatrix<f64>> = (0..m).map(ad).collect();
    let killing = DMatrix::from_fn(m, m, |i, j| (&ads[i] * &ads[j]).trace());
    let restricted = derived_basis.transpose() * &killing * &derived_basis;
    let sv = restricted.singular_values();
    let (min_sv, max_sv) = sv.iter().fold((f64::INFINITY, 0.0_f64), |(lo, hi), s| {
        (lo.min(*s), hi.max(*s))
    });
    let killing_nondegenerate =
        derived_dim == 0 || min_sv > STRUCTURE_TOL * max_sv.max(f64::MIN_POSITIVE);

    let reductive = center_dim + derived_dim == m && killing_nondegenerate;
    report.numeric = vec![closure, conjugation];
    report.details = BTreeMap::from([
        ("algebra_dim".to_string(), d as f64),
        ("h0_dim".to_string(), m as f64),
        ("center_dim".to_string(), center_dim as f64),
        ("derived_dim".to_string(), derived_dim as f64),
        ("closure_defect".to_string(), closure),
        ("conjugation_defect".to_string(), conjugation),
        (
            "killing_min_singular".to_string(),
            if derived_dim == 0 { 0.0 } else { min_sv },
        ),
        ("killing_max_singular".to_string(), max_sv),
    ]);
    let err = closure.max(conjugation);
    report.finish(if reductive { err } else { err.max(1.0) })
}

/// `L̄` restricted to `ker L` in one sector.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RestrictedSpectrum {
    pub mode: Mode,
    /// Eigenvalues of the restriction; `residuals` are those of the
    /// function-level identity `λu = {f, u}`.
    pub spectrum: SpectrumReport,
    /// Worst `‖(I - P_ker) L̄ b‖` over the kernel basis.
    pub projection_defect: f64,
    /// Worst nodal gap between `(L̄ - L) b` and `{f, b}`.
    pub bracket_agreement: f64,
}

/// Matrix of `L̄` on `ker L` at a soliton, with its eigenpairs checked
/// against the Poisson bracket with `f`.
pub fn restricted_conjugate_operator(
    geom: &ModelGeometry,
    phi: &PotentialField,
    kernel: &Kernel,
) -> Result<RestrictedSpectrum> {
    let f = ricci_potential(geom, phi)?.values;
    let metric = geom.metric(phi)?;
    let mode = kernel.mode;
    let l = assemble_l(geom, phi, &f, mode)?;
    let lbar = assemble_lbar(geom, phi, &f, mode)?;
    let k = kernel.basis.len();
    let bracket = |u: &[f64]| -> Vec<f64> {
        if mode == Mode::INVARIANT {
            geom.poisson_bracket_with(phi, &f, u)
                .expect("lengths checked by the kernel")
        } else {
            geom.poisson_bracket_mode(&metric, mode, &f, u)
        }
    };

    let images: Vec<Vec<f64>> = kernel.basis.iter().map(|b| lbar.apply(b)).collect();
    let mut projection_defect = 0.0_f64;
    let mut bracket_agreement = 0.0_f64;
    let mut restricted = DMatrix::zeros(k, k);
    for (j, (b, img)) in kernel.basis.iter().zip(&images).enumerate() {
        let mut rest = img.clone();
        for (i, bi) in kernel.basis.iter().enumerate() {
            let c = lbar.inner(img, bi);
            restricted[(i, j)] = c;
            rest.iter_mut().zip(bi).for_each(|(r, x)| *r -= c * x);
        }
        projection_defect =
            projection_defect.max(lbar.norm_of(&rest) / lbar.norm_of(b).max(f64::MIN_POSITIVE));
        let lb = l.apply(b);
        let br = bracket(b);
        let scale = br
            .iter()
            .chain(img.iter())
            .fold(1.0_f64, |m, v| m.max(v.abs()));
        let gap = (0..geom.n_nodes)
            .map(|i| (img[i] - lb[i] - br[i]).abs())
            .fold(0.0_f64, f64::max);
        bracket_agreement = bracket_agreement.max(gap / scale);
    }
    if projection_defect > PROJECTION_TOL {
        return Err(LabError::Discretization {
            what: "conjugate operator leaving ker L",
            defect: projection_defect,
            threshold: PROJECTION_TOL,
        });
    }

    let sym = (&restricted + restricted.transpose()) * 0.5;
    let eig = SymmetricEigen::new(sym);
    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let values: Vec<f64> = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let mut basis = Vec::with_capacity(k);
    let mut residuals = Vec::with_capacity(k);
    for &c in &order {
        let u: Vec<f64> = (0..geom.n_nodes)
            .map(|n| {
                (0..k)
                    .map(|j| eig.eigenvectors[(j, c)] * kernel.basis[j][n])
                    .sum()
            })
            .collect();
        let br = bracket(&u);
        let r: Vec<f64> = br
            .iter()
            .zip(&u)
            .map(|(b, x)| b - eig.eigenvalues[c] * x)
            .collect();
        residuals.push(lbar.norm_of(&r) / lbar.norm_of(&u).max(f64::MIN_POSITIVE));
        basis.push(u);
    }
    let scale = values.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
    let clusters = cluster_sorted(&values, (CLUSTER_REL_TOL * scale).max(CLUSTER_ABS_FLOOR));
    Ok(RestrictedSpectrum {
        mode,
        spectrum: SpectrumReport {
            eigenvalues: values,
            clusters,
            basis: Some(basis),
            residuals,
            operator_norm: scale,
        },
        projection_defect,
        bracket_agreement,
    })
}
