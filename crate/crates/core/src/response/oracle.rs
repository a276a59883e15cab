//! Independent reference: adaptive Dormand–Prince integration of the unit
//! step responses, with quintic Hermite dense output.

use nalgebra::{DMatrix, DVector};

use crate::netmodel::LinearSystem;
use crate::{Error, Result};

// Dormand–Prince 5(4) tableau.
// The system is autonomous, so the node abscissae c_i are not needed.
const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const B1: f64 = 35.0 / 384.0;
const B3: f64 = 500.0 / 1113.0;
const B4: f64 = 125.0 / 192.0;
const B5: f64 = -2187.0 / 6784.0;
const B6: f64 = 11.0 / 84.0;
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;

/// Accepted integration nodes of one unit-step column.
#[derive(Debug, Clone)]
struct Track {
    times: Vec<f64>,
    states: Vec<DVector<f64>>,
}

/// Dense-output step responses of every disturbance column.
#[derive(Debug, Clone)]
pub struct OracleTrajectory {
    a: DMatrix<f64>,
    b: DMatrix<f64>,
    c: DMatrix<f64>,
    tracks: Vec<Track>,
    pub horizon: f64,
}

impl OracleTrajectory {
    /// State of column `j` at time `t` by quintic Hermite interpolation
    /// between nodes, using `ẋ = Ax + b` and `ẍ = Aẋ` at both ends.
    fn state(&self, j: usize, t: f64) -> DVector<f64> {
        let tr = &self.tracks[j];
        let t = t.clamp(0.0, self.horizon);
        let k = match tr.times.binary_search_by(|s| s.total_cmp(&t)) {
            Ok(k) => return tr.states[k].clone(),
            Err(k) => k.clamp(1, tr.times.len() - 1),
        };
        let (t0, t1) = (tr.times[k - 1], tr.times[k]);
        let h = t1 - t0;
        let s = (t - t0) / h;
        let b = self.b.column(j);
        let (x0, x1) = (&tr.states[k - 1], &tr.states[k]);
        let v0 = &self.a * x0 + b;
        let v1 = &self.a * x1 + b;
        let a0 = &self.a * &v0;
        let a1 = &self.a * &v1;

        let s2 = s * s;
        let s3 = s2 * s;
        let s4 = s3 * s;
        let s5 = s4 * s;
        let h00 = 1.0 - 10.0 * s3 + 15.0 * s4 - 6.0 * s5;
        let h10 = s - 6.0 * s3 + 8.0 * s4 - 3.0 * s5;
        let h20 = 0.5 * (s2 - 3.0 * s3 + 3.0 * s4 - s5);
        let h01 = 10.0 * s3 - 15.0 * s4 + 6.0 * s5;
        let h11 = -4.0 * s3 + 7.0 * s4 - 3.0 * s5;
        let h21 = 0.5 * (s3 - 2.0 * s4 + s5);
        x0 * h00 + v0 * (h10 * h) + a0 * (h20 * h * h) + x1 * h01 + v1 * (h11 * h) + a1 * (h21 * h * h)
    }

    /// `(y, ẏ, ÿ)` of every (output, disturbance) pair at time `t`.
    pub fn sample(&self, t: f64) -> (DMatrix<f64>, DMatrix<f64>, DMatrix<f64>) {
        let m = self.c.nrows();
        let d = self.tracks.len();
        let mut y = DMatrix::zeros(m, d);
        let mut dy = DMatrix::zeros(m, d);
        let mut ddy = DMatrix::zeros(m, d);
        for j in 0..d {
            let x = self.state(j, t);
            let v = &self.a * &x + self.b.column(j);
            let acc = &self.a * &v;
            y.set_column(j, &(&self.c * x));
            dy.set_column(j, &(&self.c * v));
            ddy.set_column(j, &(&self.c * acc));
        }
        (y, dy, ddy)
    }

    pub fn steps(&self) -> usize {
        self.tracks.iter().map(|t| t.times.len() - 1).sum()
    }
}

fn integrate_column(a: &DMatrix<f64>, b: &DVector<f64>, horizon: f64, tolerance: f64) -> Result<Track> {
    let n = a.nrows();
    let f = |x: &DVector<f64>| a * x + b;
    let mut t = 0.0;
    let mut x = DVector::zeros(n);
    let mut times = vec![0.0];
    let mut states = vec![x.clone()];
    let mut h = (horizon * 1e-3).min(1e-2 / (a.norm() + 1.0));
    let mut k1 = f(&x);

    while t < horizon {
        if h < 1e-14 * t.max(1.0) {
            return Err(Error::StepUnderflow { t });
        }
        let last = t + h >= horizon;
        if last {
            h = horizon - t;
        }
        let k2 = f(&(&x + &k1 * (h * A21)));
        let k3 = f(&(&x + (&k1 * A31 + &k2 * A32) * h));
        let k4 = f(&(&x + (&k1 * A41 + &k2 * A42 + &k3 * A43) * h));
        let k5 = f(&(&x + (&k1 * A51 + &k2 * A52 + &k3 * A53 + &k4 * A54) * h));
        let k6 = f(&(&x + (&k1 * A61 + &k2 * A62 + &k3 * A63 + &k4 * A64 + &k5 * A65) * h));
        let x_new = &x + (&k1 * B1 + &k3 * B3 + &k4 * B4 + &k5 * B5 + &k6 * B6) * h;
        let k7 = f(&x_new);
        let err_vec = (&k1 * E1 + &k3 * E3 + &k4 * E4 + &k5 * E5 + &k6 * E6 + &k7 * E7) * h;

        let mut err = 0.0f64;
        for i in 0..n {
            let sc = tolerance * (1.0 + x[i].abs().max(x_new[i].abs()));
            err = err.max((err_vec[i] / sc).abs());
        }
        if err <= 1.0 {
            t = if last { horizon } else { t + h };
            x = x_new;
            k1 = k7;
            times.push(t);
            states.push(x.clone());
        }
        let factor = if err == 0.0 { 5.0 } else { (0.9 * err.powf(-0.2)).clamp(0.2, 5.0) };
        h *= factor;
    }
    Ok(Track { times, states })
}

/// Integrates `ẋ = Ax + b_j` from rest for every column of `b` over
/// `[0, horizon]` with per-step error tolerance `tolerance` (mixed
/// absolute/relative).
pub fn simulate_oracle(
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
    c: &DMatrix<f64>,
    horizon: f64,
    tolerance: f64,
) -> Result<OracleTrajectory> {
    if !(horizon > 0.0) {
        return Err(Error::invalid("oracle", "horizon must be positive"));
    }
    let tracks = (0..b.ncols())
        .map(|j| integrate_column(a, &b.column(j).into_owned(), horizon, tolerance))
        .collect::<Result<Vec<_>>>()?;
    Ok(OracleTrajectory { a: a.clone(), b: b.clone(), c: c.clone(), tracks, horizon })
}

/// Oracle for a [`LinearSystem`], with the disturbance magnitudes applied.
pub fn simulate_system(sys: &LinearSystem, horizon: f64, tolerance: f64) -> Result<OracleTrajectory> {
    simulate_oracle(&sys.a, &sys.scaled_input(), &sys.c, horizon, tolerance)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn scalar_lag() {
        let a = DMatrix::from_element(1, 1, -1.0);
        let one = DMatrix::from_element(1, 1, 1.0);
        let tr = simulate_oracle(&a, &one, &one, 10.0, 1e-12).unwrap();
        for t in [0.0, 0.1, 0.77, 3.0, 9.99, 10.0] {
            let (y, dy, _) = tr.sample(t);
            assert!((y[(0, 0)] - (1.0 - (-t).exp())).abs() < 1e-10, "t={t}");
            assert!((dy[(0, 0)] - (-t).exp()).abs() < 1e-10);
        }
    }

    #[test]
    fn zero_input_gives_zero_output() {
        let a = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, -1.0, -0.5]);
        let tr = simulate_oracle(&a, &DMatrix::zeros(2, 1), &DMatrix::identity(2, 2), 5.0, 1e-10).unwrap();
        for t in [0.0, 1.0, 4.5] {
            let (y, dy, ddy) = tr.sample(t);
            assert_eq!(y.norm() + dy.norm() + ddy.norm(), 0.0);
        }
    }
}
