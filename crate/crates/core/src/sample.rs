//! Seeded band-limited test data: low-degree Legendre combinations in the
//! moment coordinate, sup-norm normalised.

use crate::geometry::{ModelGeometry, PotentialField};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Highest Legendre degree used for random functions.
pub const MAX_DEGREE: usize = 6;

pub struct SmoothSampler<'g> {
    geom: &'g ModelGeometry,
    rng: ChaCha8Rng,
}

impl<'g> SmoothSampler<'g> {
    pub fn new(geom: &'g ModelGeometry, seed: u64) -> Self {
        SmoothSampler {
            geom,
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    /// Random real function with `‖u‖∞ = amplitude`.
    pub fn function(&mut self, amplitude: f64) -> Vec<f64> {
        let coeffs: Vec<f64> = (0..=MAX_DEGREE)
            .map(|_| self.rng.gen_range(-1.0..1.0))
            .collect();
        let (a, b) = self.geom.interval();
        let mut u: Vec<f64> = self
            .geom
            .nodes
            .iter()
            .map(|x| legendre_series(&coeffs, (2.0 * x - a - b) / (b - a)))
            .collect();
        let sup = u.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
        if sup > 0.0 {
            u.iter_mut().for_each(|v| *v *= amplitude / sup);
        }
        u
    }

    pub fn complex_function(&mut self, amplitude: f64) -> Vec<Complex64> {
        let re = self.function(amplitude);
        let im = self.function(amplitude);
        re.into_iter()
            .zip(im)
            .map(|(r, i)| Complex64::new(r, i))
            .collect()
    }

    /// Random potential with sup norm at most `amplitude` whose metric keeps
    /// a margin of at least one half.
    pub fn admissible_potential(&mut self, amplitude: f64) -> PotentialField {
        let mut values = self.function(amplitude);
        for _ in 0..60 {
            let phi = PotentialField::new(self.geom, values.clone()).expect("sampler length");
            match self.geom.metric(&phi) {
                Ok(m) if m.margin >= 0.5 => return phi,
                _ => values.iter_mut().for_each(|v| *v *= 0.5),
            }
        }
        PotentialField::zero(self.geom)
    }

    /// Random direction with `‖δφ‖∞ = 0.1 · margin`.
    pub fn direction(&mut self, margin: f64) -> Vec<f64> {
        self.function(0.1 * margin)
    }
}

fn legendre_series(coeffs: &[f64], s: f64) -> f64 {
    let (mut p0, mut p1) = (1.0, s);
    let mut acc = coeffs[0] * p0;
    if coeffs.len() > 1 {
        acc += coeffs[1] * p1;
    }
    for (k, c) in coeffs.iter().enumerate().skip(2) {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * s * p1 - (kf - 1.0) * p0) / kf;
        acc += c * p2;
        p0 = p1;
        p1 = p2;
    }
    acc
}
