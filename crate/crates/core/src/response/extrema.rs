use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::residues::{PairResponse, ResidueSet};
use crate::{Error, Result, C64};

const HORIZON_CAP: f64 = 60.0;
const HORIZON_TIME_CONSTANTS: f64 = 10.0;
const MIN_GRID_STEPS: usize = 2000;
const GRID_POINTS_PER_HALF_PERIOD: f64 = 4.0;
const NEWTON_MAX_ITERATIONS: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExtremumKind {
    /// Stationary point found by the Newton search.
    Interior,
    /// The onset `t = 0` (RoCoF only).
    Initial,
    /// The supremum is the final value, approached as `t → ∞`; the stored
    /// time is the search horizon.
    Steady,
}

/// Largest excursion of `|y⁽ⁿ⁾|` for one (output, disturbance) pair.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Extremum {
    /// Magnitude, in output units.
    pub value: f64,
    pub time: f64,
    /// Sign of the signed extremum.
    pub sign: f64,
    pub kind: ExtremumKind,
    /// False when the Newton search exhausted its iterations and the best
    /// bracketed point was kept.
    pub converged: bool,
}

/// Extrema for every (output, disturbance) pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExtremumMatrix {
    pub outputs: usize,
    pub inputs: usize,
    /// Row-major over (output, disturbance).
    pub entries: Vec<Extremum>,
}

impl ExtremumMatrix {
    pub fn get(&self, output: usize, input: usize) -> &Extremum {
        &self.entries[output * self.inputs + input]
    }

    pub fn values(&self) -> DMatrix<f64> {
        DMatrix::from_fn(self.outputs, self.inputs, |o, d| self.get(o, d).value)
    }

    pub fn times(&self) -> DMatrix<f64> {
        DMatrix::from_fn(self.outputs, self.inputs, |o, d| self.get(o, d).time)
    }

    pub fn max(&self) -> f64 {
        self.entries.iter().map(|e| e.value).fold(0.0, f64::max)
    }

    pub fn mean(&self) -> f64 {
        if self.entries.is_empty() {
            0.0
        } else {
            self.entries.iter().map(|e| e.value).sum::<f64>() / self.entries.len() as f64
        }
    }
}

/// Uniform bootstrap grid `t_k = k·spacing`, `k = 0..=steps`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SearchGrid {
    pub spacing: f64,
    pub steps: usize,
    pub horizon: f64,
}

impl SearchGrid {
    pub fn time(&self, k: usize) -> f64 {
        k as f64 * self.spacing
    }
}

/// Grid covering ten time constants of the slowest mode (capped at 60 s)
/// with at least four points per half period of the fastest mode.
pub fn search_grid(eigenvalues: &[C64]) -> Result<SearchGrid> {
    let mut slowest = f64::INFINITY;
    let mut fastest = 0.0f64;
    for (mode, l) in eigenvalues.iter().enumerate() {
        if !(l.re < 0.0) {
            return Err(Error::Unstable { mode, re: l.re });
        }
        slowest = slowest.min(-l.re);
        fastest = fastest.max(l.im.abs());
    }
    let horizon = if slowest.is_finite() { (HORIZON_TIME_CONSTANTS / slowest).min(HORIZON_CAP) } else { HORIZON_CAP };
    let mut spacing = horizon / MIN_GRID_STEPS as f64;
    if fastest > 0.0 {
        spacing = spacing.min(std::f64::consts::PI / (GRID_POINTS_PER_HALF_PERIOD * fastest));
    }
    let steps = (horizon / spacing).ceil() as usize;
    Ok(SearchGrid { spacing: horizon / steps as f64, steps, horizon })
}

/// Root of `y⁽ⁿ⁺¹⁾` in `[lo, hi]`, i.e. a stationary point of `y⁽ⁿ⁾`, by
/// Newton iteration safeguarded with bisection. `start` seeds the search.
fn stationary_point(pair: &PairResponse, n: u32, lo: f64, hi: f64, start: f64) -> (f64, bool) {
    let g = |t: f64| pair.eval(t, n + 1);
    let scale = pair.magnitude(n + 1).max(f64::MIN_POSITIVE);
    let (mut a, mut b) = (lo, hi);
    let (ga, gb) = (g(a), g(b));
    let bracketed = ga * gb <= 0.0;

    let mut t = start;
    for _ in 0..NEWTON_MAX_ITERATIONS {
        let gt = g(t);
        if gt.abs() <= 1e-13 * scale {
            return (t, true);
        }
        if bracketed {
            if (gt < 0.0) == (ga < 0.0) {
                a = t;
            } else {
                b = t;
            }
        }
        let slope = pair.eval(t, n + 2);
        let newton = t - gt / slope;
        let next = if slope != 0.0 && newton > a && newton < b && newton.is_finite() {
            newton
        } else if bracketed {
            0.5 * (a + b)
        } else {
            return (t, false);
        };
        if (next - t).abs() <= 4.0 * f64::EPSILON * t.abs().max(1.0) {
            return (next, true);
        }
        t = next;
    }
    (t, g(t).abs() <= 1e-10 * scale)
}

fn local_maxima(values: &[f64]) -> impl Iterator<Item = usize> + '_ {
    (1..values.len().saturating_sub(1)).filter(move |&k| {
        let v = values[k].abs();
        v > 0.0 && v >= values[k - 1].abs() && v >= values[k + 1].abs()
    })
}

/// Largest `|y|` of one pair: interior stationary points or the final value.
fn pair_overshoot(pair: &PairResponse, grid: &SearchGrid) -> Extremum {
    let final_value = pair.final_value();
    let mut best = Extremum {
        value: final_value.abs(),
        time: grid.horizon,
        sign: if final_value < 0.0 { -1.0 } else { 1.0 },
        kind: ExtremumKind::Steady,
        converged: true,
    };
    if pair.is_zero() {
        return best;
    }
    let (y, _) = pair.sample_grid(grid.spacing, grid.steps);
    for k in local_maxima(&y) {
        let (t, converged) = stationary_point(pair, 0, grid.time(k - 1), grid.time(k + 1), grid.time(k));
        let (t, v) = {
            let v = pair.eval(t, 0);
            // Keep the grid point if refinement landed somewhere worse.
            if v.abs() >= y[k].abs() {
                (t, v)
            } else {
                (grid.time(k), y[k])
            }
        };
        if v.abs() > best.value {
            best = Extremum {
                value: v.abs(),
                time: t,
                sign: if v < 0.0 { -1.0 } else { 1.0 },
                kind: ExtremumKind::Interior,
                converged,
            };
        }
    }
    best
}

/// Largest `|ẏ|` of one pair: the onset or interior stationary points of `ẏ`.
fn pair_rocof(pair: &PairResponse, grid: &SearchGrid) -> Extremum {
    let initial = pair.eval(0.0, 1);
    let mut best = Extremum {
        value: initial.abs(),
        time: 0.0,
        sign: if initial < 0.0 { -1.0 } else { 1.0 },
        kind: ExtremumKind::Initial,
        converged: true,
    };
    if pair.is_zero() {
        return best;
    }
    let (_, dy) = pair.sample_grid(grid.spacing, grid.steps);
    for k in local_maxima(&dy) {
        let (t, converged) = stationary_point(pair, 1, grid.time(k - 1), grid.time(k + 1), grid.time(k));
        let (t, v) = {
            let v = pair.eval(t, 1);
            if v.abs() >= dy[k].abs() {
                (t, v)
            } else {
                (grid.time(k), dy[k])
            }
        };
        if v.abs() > best.value {
            best = Extremum {
                value: v.abs(),
                time: t,
                sign: if v < 0.0 { -1.0 } else { 1.0 },
                kind: ExtremumKind::Interior,
                converged,
            };
        }
    }
    best
}

fn search(res: &ResidueSet, f: fn(&PairResponse, &SearchGrid) -> Extremum) -> Result<ExtremumMatrix> {
    let grid = search_grid(&res.eigenvalues)?;
    let (m, d) = (res.outputs(), res.inputs());
    let mut entries = Vec::with_capacity(m * d);
    for o in 0..m {
        for j in 0..d {
            entries.push(f(&res.pair(o, j), &grid));
        }
    }
    Ok(ExtremumMatrix { outputs: m, inputs: d, entries })
}

/// Overshoot `Mp = max_t |y(t)|` and peak time for every pair.
pub fn find_overshoot(res: &ResidueSet) -> Result<ExtremumMatrix> {
    search(res, pair_overshoot)
}

/// RoCoF `R = max_t |ẏ(t)|` and its time for every pair, `t = 0` included.
pub fn find_rocof(res: &ResidueSet) -> Result<ExtremumMatrix> {
    search(res, pair_rocof)
}
