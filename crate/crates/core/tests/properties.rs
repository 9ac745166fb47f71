use proptest::prelude::*;
use solitonlab::energy::h_value;
use solitonlab::quadrature::gauss_legendre;
use solitonlab::{make_backend, ModelGeometry, ModelId, PotentialField};

fn coefficient_vec(dim: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-2.0..2.0f64, dim)
}

fn add(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x + y).collect()
}

/// Smooth bump `Σ c_k x^k` on the backend's nodes, scaled into the admissible range.
fn potential(geom: &ModelGeometry, coeffs: &[f64]) -> PotentialField {
    let (a, b) = geom.interval();
    let values = geom
        .nodes
        .iter()
        .map(|&x| {
            let t = (2.0 * x - a - b) / (b - a);
            coeffs.iter().rev().fold(0.0, |acc, c| acc * t + c)
        })
        .collect();
    PotentialField::new(geom, values).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn brackets_are_antisymmetric_and_satisfy_jacobi(
        model in prop_oneof![Just(ModelId::CP1), Just(ModelId::DP1)],
        seed in coefficient_vec(24),
    ) {
        let geom = make_backend(model, 16).unwrap();
        let sc = geom.structure_constants();
        let d = sc.dim();
        let (x, rest) = seed.split_at(d);
        let (y, rest) = rest.split_at(d);
        let z = &rest[..d];
        let xy = sc.bracket(x, y);
        let yx = sc.bracket(y, x);
        for k in 0..d {
            prop_assert!((xy[k] + yx[k]).abs() <= 1e-12);
        }
        let jacobi = add(
            &add(&sc.bracket(x, &sc.bracket(y, z)), &sc.bracket(y, &sc.bracket(z, x))),
            &sc.bracket(z, &sc.bracket(x, y)),
        );
        prop_assert!(jacobi.iter().all(|v| v.abs() <= 1e-11));
    }

    #[test]
    fn gauss_rule_integrates_polynomials_exactly(n in 1usize..40, coeffs in coefficient_vec(80)) {
        let (nodes, weights) = gauss_legendre(n);
        let degree = 2 * n - 1;
        let poly = &coeffs[..=degree.min(coeffs.len() - 1)];
        let quad: f64 = nodes
            .iter()
            .zip(&weights)
            .map(|(&x, &w)| w * poly.iter().rev().fold(0.0, |acc, c| acc * x + c))
            .sum();
        let exact: f64 = poly
            .iter()
            .enumerate()
            .map(|(k, c)| if k % 2 == 0 { 2.0 * c / (k as f64 + 1.0) } else { 0.0 })
            .sum();
        let scale: f64 = poly.iter().map(|c| c.abs()).sum::<f64>().max(1.0);
        prop_assert!((quad - exact).abs() <= 1e-13 * scale * n as f64);
    }

    #[test]
    fn volume_and_h_ignore_constant_shifts(
        model in prop_oneof![Just(ModelId::CP1), Just(ModelId::DP1)],
        coeffs in prop::collection::vec(-0.15..0.15f64, 1..5),
        shift in -5.0..5.0f64,
    ) {
        let geom = make_backend(model, 48).unwrap();
        let phi = potential(&geom, &coeffs);
        let metric = geom.metric(&phi);
        prop_assume!(metric.is_ok());
        let volume: f64 = metric.unwrap().measure.iter().sum();
        prop_assert!((volume - geom.reference_volume).abs() <= 1e-11 * geom.reference_volume);

        let shifted = phi.shifted(&geom, &vec![1.0; geom.n_nodes], shift);
        let (h0, h1) = (h_value(&geom, &phi).unwrap(), h_value(&geom, &shifted).unwrap());
        prop_assert!(h0 >= -1e-12);
        prop_assert!((h0 - h1).abs() <= 1e-12 * (1.0 + h0.abs()));
    }
}
