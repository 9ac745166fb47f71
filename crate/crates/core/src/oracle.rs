//! Shooting oracle for the Koiso soliton on the one-point blow-up of ℂP².
//!
//! In the momentum construction a `U(2)`-invariant soliton has Ricci
//! potential `f = s·y + const` and profile solving the linear ODE
//!
//! ```text
//! Θ'(y) = 2 - y - (1/y + s) Θ(y),   Θ(1) = 0,   Θ(3) = 0,
//! ```
//!
//! on the moment interval `(1, 3)`. The slope `s` is found by shooting from
//! `y = 1` and bisecting on the sign of `Θ(3)`. This module shares no code
//! with the flow, so it serves as an independent check of its endpoint.

const A: f64 = 1.0;
const B: f64 = 3.0;
const STEPS: usize = 20_000;

#[derive(Debug, Clone)]
pub struct KoisoOracle {
    /// Slope `s` of the Ricci potential in the moment coordinate.
    pub ricci_slope: f64,
    grid_theta: Vec<f64>,
    grid_dtheta: Vec<f64>,
    h: f64,
}

fn rhs(y: f64, theta: f64, s: f64) -> f64 {
    2.0 - y - (1.0 / y + s) * theta
}

fn shoot(s: f64, record: Option<&mut (Vec<f64>, Vec<f64>)>) -> f64 {
    let h = (B - A) / STEPS as f64;
    let mut theta = 0.0;
    let mut rec = record;
    if let Some(r) = rec.as_deref_mut() {
        r.0.push(theta);
        r.1.push(rhs(A, theta, s));
    }
    for i in 0..STEPS {
        let y = A + i as f64 * h;
        let k1 = rhs(y, theta, s);
        let k2 = rhs(y + 0.5 * h, theta + 0.5 * h * k1, s);
        let k3 = rhs(y + 0.5 * h, theta + 0.5 * h * k2, s);
        let k4 = rhs(y + h, theta + h * k3, s);
        theta += h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
        if let Some(r) = rec.as_deref_mut() {
            r.0.push(theta);
            r.1.push(rhs(y + h, theta, s));
        }
    }
    theta
}

impl KoisoOracle {
    pub fn solve() -> Self {
        let (mut lo, mut hi) = (-2.0, 0.0);
        let (flo, fhi) = (shoot(lo, None), shoot(hi, None));
        assert!(flo > 0.0 && fhi < 0.0, "shooting bracket lost: {flo} {fhi}");
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if mid == lo || mid == hi {
                break;
            }
            if shoot(mid, None) > 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let s = 0.5 * (lo + hi);
        let mut rec = (Vec::with_capacity(STEPS + 1), Vec::with_capacity(STEPS + 1));
        shoot(s, Some(&mut rec));
        KoisoOracle {
            ricci_slope: s,
            grid_theta: rec.0,
            grid_dtheta: rec.1,
            h: (B - A) / STEPS as f64,
        }
    }

    /// Coefficient `c = -s > 0` of the soliton field along the generator
    /// whose holomorphy potential is `-(y - ȳ)`.
    pub fn field_coefficient(&self) -> f64 {
        -self.ricci_slope
    }

    /// `Θ(y)` by cubic Hermite interpolation of the shooting grid.
    pub fn profile(&self, y: f64) -> f64 {
        let t = ((y - A) / self.h).clamp(0.0, STEPS as f64);
        let i = (t.floor() as usize).min(STEPS - 1);
        let u = t - i as f64;
        let (p0, p1) = (self.grid_theta[i], self.grid_theta[i + 1]);
        let (m0, m1) = (
            self.grid_dtheta[i] * self.h,
            self.grid_dtheta[i + 1] * self.h,
        );
        let (u2, u3) = (u * u, u * u * u);
        (2.0 * u3 - 3.0 * u2 + 1.0) * p0
            + (u3 - 2.0 * u2 + u) * m0
            + (-2.0 * u3 + 3.0 * u2) * p1
            + (u3 - u2) * m1
    }

    /// Terminal slope `Θ'(3)`; smoothness of the soliton requires `-1`.
    pub fn terminal_slope(&self) -> f64 {
        self.grid_dtheta[STEPS]
    }
}
