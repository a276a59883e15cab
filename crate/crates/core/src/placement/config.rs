use serde::{Deserialize, Serialize};

use crate::capability::{dual_constraint, CapabilityBall, GainConstraint, NormOrder};
use crate::netmodel::PowerSystemCase;
use crate::{Error, Result};

/// Cost weights. ζ is a fraction, overshoot in Hz and RoCoF in Hz/s.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Weights {
    /// Reward on the smallest damping ratio.
    pub zeta: f64,
    /// Worst-case RoCoF `R∞`.
    pub rocof_max: f64,
    /// Worst-case overshoot `S∞`.
    pub overshoot_max: f64,
    /// Mean RoCoF `R1`.
    pub rocof_mean: f64,
    /// Mean overshoot `S1`.
    pub overshoot_mean: f64,
}

impl Weights {
    fn all(&self) -> [f64; 5] {
        [self.zeta, self.rocof_max, self.overshoot_max, self.rocof_mean, self.overshoot_mean]
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Interval {
    pub lo: Option<f64>,
    pub hi: Option<f64>,
}

impl Interval {
    /// Distance of `v` outside the interval.
    pub fn violation(&self, v: f64) -> f64 {
        let below = self.lo.map_or(0.0, |lo| (lo - v).max(0.0));
        let above = self.hi.map_or(0.0, |hi| (v - hi).max(0.0));
        below + above
    }

    pub fn is_set(&self) -> bool {
        self.lo.is_some() || self.hi.is_some()
    }
}

/// Hard bounds on every damping ratio and every (output, disturbance) pair.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Bounds {
    pub zeta_min: Option<f64>,
    /// RoCoF magnitude, Hz/s.
    pub rocof: Interval,
    /// Overshoot magnitude, Hz.
    pub overshoot: Interval,
}

impl Bounds {
    pub fn is_set(&self) -> bool {
        self.zeta_min.is_some() || self.rocof.is_set() || self.overshoot.is_set()
    }
}

/// Cost per unit of bound violation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Penalties {
    pub zeta: f64,
    pub rocof: f64,
    pub overshoot: f64,
}

impl Default for Penalties {
    fn default() -> Self {
        Penalties { zeta: 1e6, rocof: 1e6, overshoot: 1e6 }
    }
}

/// Norm ball of expected operating points, `‖(h ω, ω̇)‖_p ≤ c`, with ω in
/// Hz and ω̇ in Hz/s as produced by the capability fit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CapabilityParams {
    pub p: NormOrder,
    pub h: f64,
    pub c: f64,
}

impl Default for CapabilityParams {
    fn default() -> Self {
        CapabilityParams { p: NormOrder::One, h: 1.0, c: 1.0 }
    }
}

impl From<CapabilityBall> for CapabilityParams {
    fn from(b: CapabilityBall) -> Self {
        CapabilityParams { p: b.p, h: b.h, c: b.c }
    }
}

impl CapabilityParams {
    /// The same ball with frequency in pu, the unit the device gains act on.
    pub fn per_unit(&self, nominal_frequency_hz: f64) -> CapabilityParams {
        CapabilityParams { c: self.c / nominal_frequency_hz, ..*self }
    }

    pub fn ball(&self) -> CapabilityBall {
        CapabilityBall { p: self.p, h: self.h, c: self.c, coverage: 1.0, floored: false }
    }

    /// Gain set for a device rated `capacity`.
    pub fn constraint(&self, capacity: f64) -> Result<GainConstraint> {
        dual_constraint(&self.ball(), capacity)
    }

    /// Smallest rating that admits the gains.
    pub fn required_capacity(&self, inertia: f64, damping: f64) -> f64 {
        self.c * self.p.dual().norm(damping / self.h, inertia)
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case", deny_unknown_fields)]
pub enum Budget {
    /// Every device keeps the rating given in the case.
    #[default]
    Fixed,
    /// Ratings are free but must sum to at most `total` pu.
    Total { total: f64 },
    /// Ratings are decision variables charged `cost` per pu.
    Variable { cost: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrustRegion {
    /// Initial step limit as a fraction of each gain's largest admissible
    /// value (`P̄/c` for inertia, `h P̄/c` for damping).
    pub initial_fraction: f64,
    /// Absolute initial step limit; overrides the fraction when set.
    pub initial: Option<f64>,
    /// Stop once every step limit falls below this.
    pub floor: f64,
}

impl Default for TrustRegion {
    fn default() -> Self {
        TrustRegion { initial_fraction: 0.1, initial: None, floor: 1e-6 }
    }
}

/// Placement problem settings, read from the JSON config document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PlacementConfig {
    pub weights: Weights,
    pub bounds: Bounds,
    pub penalties: Penalties,
    /// Capability ball shared by all devices.
    pub capability: CapabilityParams,
    /// Per-device overrides, in case order.
    pub device_capability: Option<Vec<CapabilityParams>>,
    pub budget: Budget,
    pub trust_region: TrustRegion,
    pub max_iterations: usize,
    pub improvement_threshold: f64,
}

impl Default for PlacementConfig {
    fn default() -> Self {
        PlacementConfig {
            weights: Weights::default(),
            bounds: Bounds::default(),
            penalties: Penalties::default(),
            capability: CapabilityParams::default(),
            device_capability: None,
            budget: Budget::Fixed,
            trust_region: TrustRegion::default(),
            max_iterations: 200,
            improvement_threshold: 1e-6,
        }
    }
}

impl PlacementConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: PlacementConfig = serde_json::from_str(text)
            .map_err(|e| Error::parse(format!("line {} column {}", e.line(), e.column()), e.to_string()))?;
        Ok(cfg)
    }

    /// Capability of `device` as configured (Hz units).
    pub fn capability_of(&self, device: usize) -> CapabilityParams {
        self.device_capability.as_ref().and_then(|v| v.get(device).copied()).unwrap_or(self.capability)
    }

    /// Capability of `device` in pu frequency units.
    pub fn device_capability(&self, case: &PowerSystemCase, device: usize) -> CapabilityParams {
        self.capability_of(device).per_unit(case.nominal_frequency_hz)
    }

    pub fn validate(&self, case: &PowerSystemCase) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        let w = self.weights.all();
        if w.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
            return bad("weights must be finite and nonnegative".into());
        }
        let capacity_cost = match self.budget {
            Budget::Variable { cost } => cost,
            _ => 0.0,
        };
        if w.iter().all(|v| *v == 0.0) && capacity_cost <= 0.0 {
            return bad("at least one cost weight (or a capacity cost) must be positive".into());
        }
        let p = &self.penalties;
        let largest = w.iter().copied().fold(capacity_cost, f64::max);
        for (name, pen) in [("zeta", p.zeta), ("rocof", p.rocof), ("overshoot", p.overshoot)] {
            if !(pen > largest) {
                return bad(format!("slack penalty {name} = {pen} must exceed every cost weight ({largest})"));
            }
        }
        for (name, iv) in [("rocof", self.bounds.rocof), ("overshoot", self.bounds.overshoot)] {
            if let (Some(lo), Some(hi)) = (iv.lo, iv.hi) {
                if lo > hi {
                    return bad(format!("{name} bounds are inverted ({lo} > {hi})"));
                }
            }
        }
        if let Some(devs) = &self.device_capability {
            if devs.len() != case.devices.len() {
                return bad(format!("{} device capabilities for {} devices", devs.len(), case.devices.len()));
            }
        }
        for v in 0..case.devices.len() {
            let c = self.capability_of(v);
            if !(c.h > 0.0 && c.c > 0.0) {
                return bad(format!("capability of device {v} needs h > 0 and c > 0"));
            }
        }
        match self.budget {
            Budget::Total { total } if !(total >= 0.0) => return bad("total budget must be nonnegative".into()),
            Budget::Variable { cost } if !(cost >= 0.0) => return bad("capacity cost must be nonnegative".into()),
            _ => {}
        }
        let t = &self.trust_region;
        if !(t.initial_fraction > 0.0) || t.initial.is_some_and(|v| !(v > 0.0)) || !(t.floor > 0.0) {
            return bad("trust region limits must be positive".into());
        }
        if self.max_iterations == 0 || !(self.improvement_threshold >= 0.0) {
            return bad("max_iterations must be positive and improvement_threshold nonnegative".into());
        }
        Ok(())
    }
}
