//! Gauss–Legendre nodes, weights and the collocation differentiation matrix.
//!
//! Every backend lives on a compact moment interval `(a, b)`. Functions are
//! represented by their values at the `n` interior Gauss–Legendre nodes, so
//! endpoint regularity never has to be imposed explicitly: the weak forms
//! assembled in [`crate::operators`] carry the vanishing profile
//! `Θ(a) = Θ(b) = 0` and the boundary terms drop out.

use nalgebra::DMatrix;
use std::f64::consts::PI;

/// Nodes and weights of the `n`-point Gauss–Legendre rule on `[-1, 1]`,
/// nodes sorted ascending.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    let m = n.div_ceil(2);
    for i in 0..m {
        // Tricomi's asymptotic guess for the i-th largest root.
        let theta = PI * (4.0 * i as f64 + 3.0) / (4.0 * n as f64 + 2.0);
        let nf = n as f64;
        let mut x = (1.0 - (nf - 1.0) / (8.0 * nf * nf * nf)) * theta.cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (p, d) = legendre_with_derivative(n, x);
            dp = d;
            let dx = p / d;
            x -= dx;
            if dx.abs() <= 1e-16 * x.abs().max(1.0) {
                let (_, d) = legendre_with_derivative(n, x);
                dp = d;
                break;
            }
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes[n - 1 - i] = x;
        nodes[i] = -x;
        weights[n - 1 - i] = w;
        weights[i] = w;
    }
    if n % 2 == 1 {
        nodes[n / 2] = 0.0;
    }
    (nodes, weights)
}

fn legendre_with_derivative(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    let d = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

/// Differentiation matrix of the Lagrange interpolant through `nodes`.
///
/// Uses barycentric weights `(-1)^j sqrt((1 - ξ_j²) w_j)` valid for
/// Gauss–Legendre points, and the negative-sum trick on the diagonal so
/// that constants are differentiated to zero up to rounding.
pub fn differentiation_matrix(ref_nodes: &[f64], ref_weights: &[f64], scale: f64) -> DMatrix<f64> {
    let n = ref_nodes.len();
    let bary: Vec<f64> = (0..n)
        .map(|j| {
            let s = if j % 2 == 0 { 1.0 } else { -1.0 };
            s * ((1.0 - ref_nodes[j] * ref_nodes[j]) * ref_weights[j]).sqrt()
        })
        .collect();
    let mut d = DMatrix::zeros(n, n);
    for i in 0..n {
        let mut diag = 0.0;
        for j in 0..n {
            if i != j {
                let v = bary[j] / bary[i] / (ref_nodes[i] - ref_nodes[j]);
                d[(i, j)] = v * scale;
                diag -= v;
            }
        }
        d[(i, i)] = diag * scale;
    }
    d
}
