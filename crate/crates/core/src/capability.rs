//! Device capability from measured (frequency, RoCoF) clouds.
//!
//! A device delivering `P = K̃ ω + M̃ ω̇` must stay within its power rating
//! `P̄` for every operating point it is expected to see. Fitting a scaled
//! p-norm ball `‖(h ω, ω̇)‖_p ≤ c` to the measurements and applying Hölder's
//! inequality turns that requirement into `‖(K̃/h, M̃)‖_q ≤ P̄/c` on the gains.

use std::fmt;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::{Error, Result};

/// Default radius floor for [`fit_norm_ball_floored`].
pub const DEFAULT_RADIUS_FLOOR: f64 = 1e-9;

/// Supported norm orders.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum NormOrder {
    One,
    Two,
    Inf,
}

impl NormOrder {
    /// The Hölder conjugate `q` with `1/p + 1/q = 1`.
    pub fn dual(self) -> NormOrder {
        match self {
            NormOrder::One => NormOrder::Inf,
            NormOrder::Two => NormOrder::Two,
            NormOrder::Inf => NormOrder::One,
        }
    }

    pub fn norm(self, x: f64, y: f64) -> f64 {
        let (x, y) = (x.abs(), y.abs());
        match self {
            NormOrder::One => x + y,
            NormOrder::Two => x.hypot(y),
            NormOrder::Inf => x.max(y),
        }
    }

    pub fn as_f64(self) -> f64 {
        match self {
            NormOrder::One => 1.0,
            NormOrder::Two => 2.0,
            NormOrder::Inf => f64::INFINITY,
        }
    }

    /// Point of the unit sphere in direction `theta`.
    fn unit_point(self, theta: f64) -> (f64, f64) {
        let (s, c) = theta.sin_cos();
        let r = self.norm(c, s);
        (c / r, s / r)
    }
}

impl fmt::Display for NormOrder {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            NormOrder::One => f.write_str("1"),
            NormOrder::Two => f.write_str("2"),
            NormOrder::Inf => f.write_str("inf"),
        }
    }
}

impl std::str::FromStr for NormOrder {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "1" | "1.0" => Ok(NormOrder::One),
            "2" | "2.0" => Ok(NormOrder::Two),
            "inf" | "infinity" | "∞" => Ok(NormOrder::Inf),
            other => Err(Error::Config(format!("unsupported norm order {other:?} (use 1, 2 or inf)"))),
        }
    }
}

// JSON has no infinity, so orders are written as 1, 2 or "inf".
impl Serialize for NormOrder {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            NormOrder::One => s.serialize_u8(1),
            NormOrder::Two => s.serialize_u8(2),
            NormOrder::Inf => s.serialize_str("inf"),
        }
    }
}

impl<'de> Deserialize<'de> for NormOrder {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Number(f64),
            Text(String),
        }
        let text = match Raw::deserialize(d)? {
            Raw::Number(v) => v.to_string(),
            Raw::Text(s) => s,
        };
        text.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub time_s: f64,
    pub freq_dev_hz: f64,
    pub rocof_hz_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeasurementSet {
    pub samples: Vec<Sample>,
    /// RoCoF obtained by differencing the frequency column.
    pub rocof_derived: bool,
}

impl MeasurementSet {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }
}

/// Parses a measurement CSV with columns `time_s`, `freq_dev_hz` and an
/// optional `rocof_hz_s`. Without the RoCoF column it is estimated by
/// central differences (one-sided at the ends).
pub fn load_measurements(text: &str) -> Result<MeasurementSet> {
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).comment(Some(b'#')).from_reader(text.as_bytes());
    let headers = reader.headers().map_err(|e| Error::parse("header", e.to_string()))?.clone();
    let column = |names: &[&str]| headers.iter().position(|h| names.contains(&h));
    let time = column(&["time_s", "time"]).ok_or_else(|| Error::parse("header", "missing column time_s"))?;
    let freq = column(&["freq_dev_hz"]).ok_or_else(|| Error::parse("header", "missing column freq_dev_hz"))?;
    let rocof = column(&["rocof_hz_s"]);

    let mut samples = Vec::new();
    for (row, record) in reader.records().enumerate() {
        let row = row + 1;
        let record = record.map_err(|e| Error::parse(format!("row {row}"), e.to_string()))?;
        let field = |col: usize, name: &str| -> Result<f64> {
            let cell = record.get(col).ok_or_else(|| Error::parse(format!("row {row}"), format!("missing {name}")))?;
            let v: f64 = cell
                .parse()
                .map_err(|_| Error::parse(format!("row {row}"), format!("{name} is not a number: {cell:?}")))?;
            if !v.is_finite() {
                return Err(Error::parse(format!("row {row}"), format!("{name} is not finite")));
            }
            Ok(v)
        };
        samples.push(Sample {
            time_s: field(time, "time_s")?,
            freq_dev_hz: field(freq, "freq_dev_hz")?,
            rocof_hz_s: match rocof {
                Some(c) => field(c, "rocof_hz_s")?,
                None => 0.0,
            },
        });
    }
    if samples.is_empty() {
        return Err(Error::EmptyData);
    }
    for (k, w) in samples.windows(2).enumerate() {
        if !(w[1].time_s > w[0].time_s) {
            return Err(Error::parse(format!("row {}", k + 2), "time_s must be strictly increasing"));
        }
    }
    if rocof.is_none() {
        differentiate(&mut samples)?;
    }
    Ok(MeasurementSet { samples, rocof_derived: rocof.is_none() })
}

fn differentiate(samples: &mut [Sample]) -> Result<()> {
    let n = samples.len();
    if n < 2 {
        return Err(Error::parse("row 1", "RoCoF column absent and too few rows to differentiate"));
    }
    let slope = |a: &Sample, b: &Sample| (b.freq_dev_hz - a.freq_dev_hz) / (b.time_s - a.time_s);
    let rates: Vec<f64> = (0..n)
        .map(|k| match k {
            0 => slope(&samples[0], &samples[1]),
            k if k == n - 1 => slope(&samples[n - 2], &samples[n - 1]),
            k => slope(&samples[k - 1], &samples[k + 1]),
        })
        .collect();
    for (s, r) in samples.iter_mut().zip(rates) {
        s.rocof_hz_s = r;
    }
    Ok(())
}

/// `‖(h ω, ω̇)‖_p ≤ c`, containing a `coverage` fraction of the samples.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CapabilityBall {
    pub p: NormOrder,
    /// Frequency scaling in 1/s.
    pub h: f64,
    pub c: f64,
    pub coverage: f64,
    /// Radius was raised to the floor because the cloud was degenerate.
    #[serde(default)]
    pub floored: bool,
}

impl CapabilityBall {
    pub fn scaled_norm(&self, freq_dev_hz: f64, rocof_hz_s: f64) -> f64 {
        self.p.norm(self.h * freq_dev_hz, rocof_hz_s)
    }

    pub fn contains(&self, freq_dev_hz: f64, rocof_hz_s: f64) -> bool {
        self.scaled_norm(freq_dev_hz, rocof_hz_s) <= self.c
    }
}

/// Smallest ball containing `⌈coverage·N⌉` samples. Fails on a cloud whose
/// radius comes out as zero.
pub fn fit_norm_ball(data: &MeasurementSet, p: NormOrder, h: f64, coverage: f64) -> Result<CapabilityBall> {
    let ball = quantile_ball(data, p, h, coverage)?;
    if ball.c > 0.0 {
        Ok(ball)
    } else {
        Err(Error::DegenerateCloud(ball.c))
    }
}

/// Like [`fit_norm_ball`] but raises a degenerate radius to `floor` and
/// flags the result instead of failing.
pub fn fit_norm_ball_floored(
    data: &MeasurementSet,
    p: NormOrder,
    h: f64,
    coverage: f64,
    floor: f64,
) -> Result<CapabilityBall> {
    if !(floor > 0.0) {
        return Err(Error::Config("radius floor must be positive".into()));
    }
    let mut ball = quantile_ball(data, p, h, coverage)?;
    if ball.c < floor {
        ball.c = floor;
        ball.floored = true;
    }
    Ok(ball)
}

fn quantile_ball(data: &MeasurementSet, p: NormOrder, h: f64, coverage: f64) -> Result<CapabilityBall> {
    if data.is_empty() {
        return Err(Error::EmptyData);
    }
    if !(h > 0.0 && h.is_finite()) {
        return Err(Error::Config(format!("frequency scaling h must be positive, got {h}")));
    }
    if !(coverage > 0.0 && coverage <= 1.0) {
        return Err(Error::Config(format!("coverage must lie in (0, 1], got {coverage}")));
    }
    let mut norms: Vec<f64> = data.samples.iter().map(|s| p.norm(h * s.freq_dev_hz, s.rocof_hz_s)).collect();
    norms.sort_by(f64::total_cmp);
    let inside = ((coverage * norms.len() as f64).ceil() as usize).clamp(1, norms.len());
    Ok(CapabilityBall { p, h, c: norms[inside - 1], coverage, floored: false })
}

/// `‖(K̃/h, M̃)‖_q ≤ P̄/c`, the gain set that keeps the device within its
/// rating everywhere on the ball.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GainConstraint {
    pub q: NormOrder,
    pub h: f64,
    /// `P̄/c`.
    pub bound: f64,
}

impl GainConstraint {
    /// `‖(K̃/h, M̃)‖_q`.
    pub fn norm(&self, inertia: f64, damping: f64) -> f64 {
        self.q.norm(damping / self.h, inertia)
    }

    pub fn contains(&self, inertia: f64, damping: f64, tolerance: f64) -> bool {
        self.norm(inertia, damping) <= self.bound * (1.0 + tolerance)
    }

    /// Upper limits on `(M̃, K̃)` taken one at a time.
    pub fn axis_limits(&self) -> (f64, f64) {
        (self.bound, self.bound * self.h)
    }

    /// Boundary point `(M̃, K̃)` in direction `theta` of the `(K̃/h, M̃)` plane.
    pub fn boundary_point(&self, theta: f64) -> (f64, f64) {
        let (x, y) = self.q.unit_point(theta);
        (y * self.bound, x * self.bound * self.h)
    }
}

pub fn dual_constraint(ball: &CapabilityBall, capacity: f64) -> Result<GainConstraint> {
    if !(capacity > 0.0) {
        return Err(Error::Config(format!("capacity must be positive, got {capacity}")));
    }
    Ok(GainConstraint { q: ball.p.dual(), h: ball.h, bound: capacity / ball.c })
}

/// Outcome of the brute-force duality check.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DualityReport {
    pub resolution: usize,
    /// Largest `|K̃ω + M̃ω̇|` over both boundary grids.
    pub max_power: f64,
    /// Worst relative gap between `P̄` and the per-gain supremum on the
    /// constraint boundary.
    pub tightness_error: f64,
    /// Some ball point exceeds `P̄` once the gains are scaled by 1.01.
    pub inflated_violation: bool,
    pub passed: bool,
}

/// Boundary of the primal ball, `(ω, ω̇)`. The resolution is rounded up to
/// a multiple of eight so the corners of the 1- and ∞-balls are sampled.
fn ball_boundary(ball: &CapabilityBall, resolution: usize) -> Vec<(f64, f64)> {
    let n = resolution.div_ceil(8) * 8;
    (0..n)
        .map(|k| {
            let (x, y) = ball.p.unit_point(std::f64::consts::TAU * k as f64 / n as f64);
            (x * ball.c / ball.h, y * ball.c)
        })
        .collect()
}

fn constraint_boundary(g: &GainConstraint, resolution: usize, scale: f64) -> Vec<(f64, f64)> {
    let n = resolution.div_ceil(8) * 8;
    (0..n)
        .map(|k| {
            let (m, kd) = g.boundary_point(std::f64::consts::TAU * k as f64 / n as f64);
            (m * scale, kd * scale)
        })
        .collect()
}

/// Largest `|K̃ω + M̃ω̇|` for gains on the constraint boundary scaled by
/// `scale` and operating points on the ball boundary.
pub fn max_power(g: &GainConstraint, ball: &CapabilityBall, scale: f64, resolution: usize) -> f64 {
    let points = ball_boundary(ball, resolution);
    constraint_boundary(g, resolution, scale)
        .iter()
        .map(|&(m, k)| points.iter().map(|&(w, dw)| (k * w + m * dw).abs()).fold(0.0, f64::max))
        .fold(0.0, f64::max)
}

/// Checks on `resolution`-point boundary grids that gains on the constraint
/// boundary draw at most `capacity` anywhere on the ball, reach it for every
/// gain direction, and exceed it once inflated by 1 %.
pub fn verify_duality(g: &GainConstraint, ball: &CapabilityBall, capacity: f64, resolution: usize) -> DualityReport {
    let points = ball_boundary(ball, resolution);
    let mut max_power = 0.0f64;
    let mut tightness_error = 0.0f64;
    for (m, k) in constraint_boundary(g, resolution, 1.0) {
        let sup = points.iter().map(|&(w, dw)| (k * w + m * dw).abs()).fold(0.0, f64::max);
        max_power = max_power.max(sup);
        tightness_error = tightness_error.max((sup - capacity).abs() / capacity);
    }
    let inflated_violation = max_power_inflated(g, &points, resolution) > capacity * (1.0 + 1e-6);
    DualityReport {
        resolution: points.len(),
        max_power,
        tightness_error,
        inflated_violation,
        passed: max_power <= capacity * (1.0 + 1e-6) && tightness_error <= 1e-6 && inflated_violation,
    }
}

fn max_power_inflated(g: &GainConstraint, points: &[(f64, f64)], resolution: usize) -> f64 {
    constraint_boundary(g, resolution, 1.01)
        .iter()
        .map(|&(m, k)| points.iter().map(|&(w, dw)| (k * w + m * dw).abs()).fold(0.0, f64::max))
        .fold(0.0, f64::max)
}
