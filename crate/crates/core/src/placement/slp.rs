use std::f64::consts::FRAC_PI_2;

use serde::Serialize;

use super::config::{Budget, PlacementConfig};
use super::lp::{solve_lp, Constraint, LinearProgram, Relation};
use super::metrics::{Evaluator, MetricBundle};
use crate::capability::NormOrder;
use crate::netmodel::{DeviceGains, GainKind, ParamId, PowerSystemCase};
use crate::{Error, Result};

/// Tangent cuts outer-approximating a 2-norm capability constraint on the
/// nonnegative quadrant.
const TANGENT_CUTS: usize = 16;

/// Cost per unit step, relative to the largest weight, that makes the LP
/// prefer leaving a parameter alone when moving it gains nothing.
const STEP_TIE_COST: f64 = 1e-7;

/// Bound violations below this count as satisfied.
pub const BOUND_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Termination {
    MaxIterations,
    ImprovementThreshold,
    StepSizeFloor,
}

/// Split of the true objective.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Objective {
    pub total: f64,
    /// Weighted metric terms.
    pub performance: f64,
    /// Summed bound violations, unweighted.
    pub violation: f64,
    /// Capacity charge in variable-capacity mode.
    pub capacity: f64,
}

/// Headline metrics of one iterate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MetricSummary {
    pub zeta_min: f64,
    pub r_inf: f64,
    pub s_inf: f64,
    pub r1: f64,
    pub s1: f64,
}

impl From<&MetricBundle> for MetricSummary {
    fn from(b: &MetricBundle) -> Self {
        MetricSummary { zeta_min: b.zeta_min, r_inf: b.r_inf, s_inf: b.s_inf, r1: b.r1, s1: b.s1 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Iteration {
    pub index: usize,
    pub accepted: bool,
    /// True objective of the candidate; `None` when it could not be evaluated.
    pub objective: Option<f64>,
    /// Objective of the iterate kept after this step.
    pub accepted_objective: f64,
    pub predicted_decrease: f64,
    /// Candidate gains `[M̃0, K̃0, M̃1, …]`.
    pub gains: Vec<f64>,
    /// Step limits used to compute the candidate.
    pub step_limits: Vec<f64>,
    pub metrics: Option<MetricSummary>,
    pub total_capacity: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct PlacementResult {
    pub termination: Termination,
    pub gains: DeviceGains,
    pub objective: Objective,
    pub summary: MetricSummary,
    /// Smallest rating per device that admits its gains.
    pub capacities: Vec<f64>,
    pub total_capacity: f64,
    pub bounds_met: bool,
    pub history: Vec<Iteration>,
    #[serde(skip)]
    pub metrics: MetricBundle,
}

impl PlacementResult {
    /// Objectives of the accepted iterates, starting with the initial point.
    pub fn accepted_objectives(&self) -> Vec<f64> {
        self.history.iter().filter(|h| h.accepted).filter_map(|h| h.objective).collect()
    }
}

/// One linearised subproblem and the bookkeeping needed to read it back.
#[derive(Debug, Clone)]
pub struct LpModel {
    pub lp: LinearProgram,
    /// Variable indices `(up, down)` per parameter, `Δα = up - down`. Both
    /// parts start at zero, so a flat model leaves the gains where they are.
    pub steps: Vec<(usize, usize)>,
    /// The feasible point representing a zero step; its objective is the
    /// linear model of the current true objective.
    pub zero_step: Vec<f64>,
}

impl LpModel {
    /// `Δα` per parameter at LP point `x`.
    pub fn step(&self, x: &[f64]) -> Vec<f64> {
        self.steps.iter().map(|&(u, d)| x[u] - x[d]).collect()
    }

    pub fn predicted_decrease(&self, x: &[f64]) -> f64 {
        self.lp.value(&self.zero_step) - self.lp.value(x)
    }
}

fn rating(case: &PowerSystemCase, device: usize) -> f64 {
    case.devices[device].capacity
}

/// Required rating per device for `gains`.
pub fn required_capacities(case: &PowerSystemCase, config: &PlacementConfig, gains: &DeviceGains) -> Vec<f64> {
    gains
        .devices
        .iter()
        .enumerate()
        .map(|(v, g)| config.device_capability(case, v).required_capacity(g.inertia, g.damping))
        .collect()
}

/// The true objective the acceptance test compares.
pub fn objective(case: &PowerSystemCase, bundle: &MetricBundle, config: &PlacementConfig) -> Objective {
    let w = &config.weights;
    let performance = -w.zeta * bundle.zeta_min
        + w.rocof_max * bundle.r_inf
        + w.overshoot_max * bundle.s_inf
        + w.rocof_mean * bundle.r1
        + w.overshoot_mean * bundle.s1;

    let b = &config.bounds;
    let p = &config.penalties;
    let zeta_v: f64 = b.zeta_min.map_or(0.0, |lo| bundle.modes.iter().map(|m| (lo - m.zeta).max(0.0)).sum());
    let rocof_v: f64 = bundle.rocof.entries.iter().map(|e| b.rocof.violation(e.value)).sum();
    let over_v: f64 = bundle.overshoot.entries.iter().map(|e| b.overshoot.violation(e.value)).sum();

    let capacity = match config.budget {
        Budget::Variable { cost } => cost * required_capacities(case, config, &bundle.gains).iter().sum::<f64>(),
        _ => 0.0,
    };
    Objective {
        total: performance + p.zeta * zeta_v + p.rocof * rocof_v + p.overshoot * over_v + capacity,
        performance,
        violation: zeta_v + rocof_v + over_v,
        capacity,
    }
}

/// Linear forms `a M̃ + b K̃` whose maximum bounds the required rating
/// divided by `c`; exact for the box and the 1-norm.
fn capability_forms(q: NormOrder, h: f64, inertia: f64, damping: f64) -> Vec<(f64, f64)> {
    match q {
        NormOrder::Inf => vec![(1.0, 0.0), (0.0, 1.0 / h)],
        NormOrder::One => vec![(1.0, 1.0 / h)],
        NormOrder::Two => {
            let mut forms: Vec<(f64, f64)> = (0..TANGENT_CUTS)
                .map(|k| {
                    let theta = FRAC_PI_2 * k as f64 / (TANGENT_CUTS - 1) as f64;
                    (theta.sin(), theta.cos() / h)
                })
                .collect();
            let (x, y) = (damping / h, inertia);
            let n = x.hypot(y);
            if n > 0.0 {
                forms.push((y / n, x / (h * n)));
            }
            forms
        }
    }
}

/// Linearises the placement problem around `bundle`.
pub fn build_lp(
    bundle: &MetricBundle,
    config: &PlacementConfig,
    case: &PowerSystemCase,
    step_limits: &[f64],
) -> Result<LpModel> {
    let np = bundle.params.len();
    if np == 0 {
        return Err(Error::Config("no device parameters to place".into()));
    }
    if !bundle.has_sensitivities() {
        return Err(Error::Config("metric bundle lacks sensitivities".into()));
    }
    let mut lp = LinearProgram::default();
    let mut x0 = Vec::new();
    let w = &config.weights;
    let pairs = bundle.pairs().max(1) as f64;

    // Steps, with the mean terms folded into their costs.
    lp.offset = w.rocof_mean * bundle.r1 + w.overshoot_mean * bundle.s1;
    let capacity_cost = match config.budget {
        Budget::Variable { cost } => cost,
        _ => 0.0,
    };
    let tie = STEP_TIE_COST
        * [w.zeta, w.rocof_max, w.overshoot_max, w.rocof_mean, w.overshoot_mean, capacity_cost]
            .into_iter()
            .fold(1.0, f64::max);
    let mut steps = Vec::with_capacity(np);
    for (k, &param) in bundle.params.iter().enumerate() {
        let alpha = bundle.gains.get(param);
        let cost = w.rocof_mean * bundle.d_rocof[k].iter().sum::<f64>() / pairs
            + w.overshoot_mean * bundle.d_overshoot[k].iter().sum::<f64>() / pairs;
        let limit = step_limits[k];
        let up = lp.add_variable(format!("d{param}+"), cost + tie, 0.0, limit);
        let down = lp.add_variable(format!("d{param}-"), tie - cost, 0.0, limit.min(alpha.max(0.0)));
        steps.push((up, down));
        x0.extend([0.0, 0.0]);
    }
    let split = |k: usize, a: f64| [(steps[k].0, a), (steps[k].1, -a)];
    let row = |k_coeffs: &dyn Fn(usize) -> f64| -> Vec<(usize, f64)> {
        (0..np).map(|k| (k, k_coeffs(k))).filter(|&(_, a)| a != 0.0).flat_map(|(k, a)| split(k, a)).collect()
    };

    // ζmin ≤ ζ_j + Σ dζ_j Δα
    if w.zeta > 0.0 {
        let z = lp.add_variable("zeta_min", -w.zeta, -1.0, 1.0);
        x0.push(bundle.zeta_min.clamp(-1.0, 1.0));
        for (j, m) in bundle.modes.iter().enumerate() {
            let mut coeffs = row(&|k| -m.sensitivity[k]);
            coeffs.push((z, 1.0));
            lp.add_constraint(Constraint::new(format!("zeta_min<=zeta[{j}]"), coeffs, Relation::Le, m.zeta));
        }
    }
    // R∞ ≥ R_ij + Σ dR_ij Δα, and the same for S∞
    for (weight, name, ext, sens) in [
        (w.rocof_max, "r_inf", &bundle.rocof, &bundle.d_rocof),
        (w.overshoot_max, "s_inf", &bundle.overshoot, &bundle.d_overshoot),
    ] {
        if weight > 0.0 {
            let v = lp.add_variable(name, weight, 0.0, f64::INFINITY);
            x0.push(ext.max());
            for (e, entry) in ext.entries.iter().enumerate() {
                let mut coeffs = row(&|k| sens[k][e]);
                coeffs.push((v, -1.0));
                lp.add_constraint(Constraint::new(format!("{name}>=[{e}]"), coeffs, Relation::Le, -entry.value));
            }
        }
    }

    // Hard bounds, with a slack only where the current iterate violates them.
    let pen = &config.penalties;
    if let Some(lo) = config.bounds.zeta_min {
        for (j, m) in bundle.modes.iter().enumerate() {
            let mut coeffs = row(&|k| m.sensitivity[k]);
            if m.zeta < lo {
                let s = lp.add_variable(format!("eps_zeta[{j}]"), pen.zeta, 0.0, f64::INFINITY);
                x0.push(lo - m.zeta);
                coeffs.push((s, 1.0));
            }
            lp.add_constraint(Constraint::new(format!("zeta[{j}]>=lo"), coeffs, Relation::Ge, lo - m.zeta));
        }
    }
    for (iv, penalty, name, ext, sens) in [
        (config.bounds.rocof, pen.rocof, "rocof", &bundle.rocof, &bundle.d_rocof),
        (config.bounds.overshoot, pen.overshoot, "overshoot", &bundle.overshoot, &bundle.d_overshoot),
    ] {
        for (e, entry) in ext.entries.iter().enumerate() {
            let v = entry.value;
            if let Some(hi) = iv.hi {
                let mut coeffs = row(&|k| sens[k][e]);
                if v > hi {
                    let s = lp.add_variable(format!("eps_{name}_hi[{e}]"), penalty, 0.0, f64::INFINITY);
                    x0.push(v - hi);
                    coeffs.push((s, -1.0));
                }
                lp.add_constraint(Constraint::new(format!("{name}[{e}]<=hi"), coeffs, Relation::Le, hi - v));
            }
            if let Some(lo) = iv.lo {
                let mut coeffs = row(&|k| sens[k][e]);
                if v < lo {
                    let s = lp.add_variable(format!("eps_{name}_lo[{e}]"), penalty, 0.0, f64::INFINITY);
                    x0.push(lo - v);
                    coeffs.push((s, 1.0));
                }
                lp.add_constraint(Constraint::new(format!("{name}[{e}]>=lo"), coeffs, Relation::Ge, lo - v));
            }
        }
    }

    // Device capability and ratings.
    let index_of =
        |device: usize, kind: GainKind| bundle.params.iter().position(|p| p.device == device && p.kind == kind);
    let mut rating_vars = Vec::new();
    for (v, g) in bundle.gains.devices.iter().enumerate() {
        let cap = config.device_capability(case, v);
        let forms = capability_forms(cap.p.dual(), cap.h, g.inertia, g.damping);
        let (im, ik) = (index_of(v, GainKind::Inertia), index_of(v, GainKind::Damping));
        let step_coeffs = |a: f64, b: f64, scale: f64| {
            let mut c = Vec::new();
            if let Some(k) = im {
                c.extend(split(k, a * scale));
            }
            if let Some(k) = ik {
                c.extend(split(k, b * scale));
            }
            c
        };
        match config.budget {
            Budget::Fixed => {
                let bound = cap.constraint(rating(case, v).max(f64::MIN_POSITIVE))?.bound;
                let bound = if rating(case, v) > 0.0 { bound } else { 0.0 };
                for (f, &(a, b)) in forms.iter().enumerate() {
                    let rhs = bound - a * g.inertia - b * g.damping;
                    lp.add_constraint(Constraint::new(
                        format!("cap[{v}.{f}]"),
                        step_coeffs(a, b, 1.0),
                        Relation::Le,
                        rhs,
                    ));
                }
            }
            Budget::Total { .. } | Budget::Variable { .. } => {
                let cost = match config.budget {
                    Budget::Variable { cost } => cost,
                    _ => 0.0,
                };
                let pv = lp.add_variable(format!("rating[{v}]"), cost, 0.0, f64::INFINITY);
                rating_vars.push(pv);
                let need = forms.iter().map(|&(a, b)| cap.c * (a * g.inertia + b * g.damping)).fold(0.0, f64::max);
                x0.push(need);
                for (f, &(a, b)) in forms.iter().enumerate() {
                    let mut coeffs = step_coeffs(a, b, cap.c);
                    coeffs.push((pv, -1.0));
                    let rhs = -cap.c * (a * g.inertia + b * g.damping);
                    lp.add_constraint(Constraint::new(format!("cap[{v}.{f}]"), coeffs, Relation::Le, rhs));
                }
            }
        }
    }
    if let Budget::Total { total } = config.budget {
        let coeffs = rating_vars.iter().map(|&pv| (pv, 1.0)).collect();
        lp.add_constraint(Constraint::new("budget", coeffs, Relation::Le, total));
    }

    debug_assert_eq!(x0.len(), lp.variables());
    Ok(LpModel { lp, steps, zero_step: x0 })
}

/// Pulls candidate gains back into the capability set by radial scaling.
fn project(config: &PlacementConfig, case: &PowerSystemCase, gains: &mut DeviceGains) -> Result<()> {
    for g in &mut gains.devices {
        g.inertia = g.inertia.max(0.0);
        g.damping = g.damping.max(0.0);
    }
    match config.budget {
        Budget::Fixed => {
            for (v, g) in gains.devices.iter_mut().enumerate() {
                let r = rating(case, v);
                if r <= 0.0 {
                    g.inertia = 0.0;
                    g.damping = 0.0;
                    continue;
                }
                let c = config.device_capability(case, v).constraint(r)?;
                let n = c.norm(g.inertia, g.damping);
                if n > c.bound {
                    g.inertia *= c.bound / n;
                    g.damping *= c.bound / n;
                }
            }
        }
        Budget::Total { total } => {
            let used: f64 = required_capacities(case, config, gains).iter().sum();
            if used > total {
                let f = if used > 0.0 { total / used } else { 0.0 };
                for g in &mut gains.devices {
                    g.inertia *= f;
                    g.damping *= f;
                }
            }
        }
        Budget::Variable { .. } => {}
    }
    Ok(())
}

fn check_initial(config: &PlacementConfig, case: &PowerSystemCase, gains: &DeviceGains) -> Result<()> {
    gains.validate()?;
    let mut projected = gains.clone();
    project(config, case, &mut projected)?;
    let moved = gains.to_vec().iter().zip(projected.to_vec()).any(|(a, b)| (a - b).abs() > 1e-9 * (1.0 + a.abs()));
    if moved {
        return Err(Error::Config("initial gains violate the capability constraints".into()));
    }
    Ok(())
}

/// Rating used to scale the initial trust region: the case rating, or an
/// even share of the total budget, or 1 pu.
fn nominal_rating(config: &PlacementConfig, case: &PowerSystemCase, device: usize) -> f64 {
    let r = rating(case, device);
    match config.budget {
        _ if r > 0.0 => r,
        Budget::Total { total } if total > 0.0 => total / case.devices.len() as f64,
        _ => 1.0,
    }
}

fn initial_limits(config: &PlacementConfig, case: &PowerSystemCase, params: &[ParamId]) -> Vec<f64> {
    params
        .iter()
        .map(|p| match config.trust_region.initial {
            Some(v) => v,
            None => {
                let cap = config.device_capability(case, p.device);
                let (m_max, k_max) =
                    cap.constraint(nominal_rating(config, case, p.device)).map_or((1.0, 1.0), |g| g.axis_limits());
                let axis = match p.kind {
                    GainKind::Inertia => m_max,
                    GainKind::Damping => k_max,
                };
                config.trust_region.initial_fraction * axis
            }
        })
        .collect()
}

/// Sequential linear programming from the gains stored in the case.
pub fn place(case: &PowerSystemCase, config: &PlacementConfig) -> Result<PlacementResult> {
    place_from(case, config, &DeviceGains::from_case(case))
}

/// Sequential linear programming from `initial` gains.
pub fn place_from(case: &PowerSystemCase, config: &PlacementConfig, initial: &DeviceGains) -> Result<PlacementResult> {
    config.validate(case)?;
    if case.devices.is_empty() {
        return Err(Error::Config("case has no devices to place".into()));
    }
    check_initial(config, case, initial)?;
    let evaluator = Evaluator::new(case)?;

    let mut gains = initial.clone();
    let mut bundle = evaluator.evaluate(&gains)?;
    let mut current = objective(case, &bundle, config);
    let mut limits = initial_limits(config, case, &bundle.params);
    let mut history = vec![Iteration {
        index: 0,
        accepted: true,
        objective: Some(current.total),
        accepted_objective: current.total,
        predicted_decrease: 0.0,
        gains: gains.to_vec(),
        step_limits: limits.clone(),
        metrics: Some(MetricSummary::from(&bundle)),
        total_capacity: required_capacities(case, config, &gains).iter().sum(),
    }];

    let threshold = |j: f64| config.improvement_threshold * j.abs().max(1.0);
    let mut termination = Termination::MaxIterations;
    for index in 1..=config.max_iterations {
        if limits.iter().all(|&l| l < config.trust_region.floor) {
            termination = Termination::StepSizeFloor;
            break;
        }
        let model = build_lp(&bundle, config, case, &limits)?;
        let sol = solve_lp(&model.lp)?;
        let predicted = model.predicted_decrease(&sol.x);
        if predicted <= threshold(current.total) {
            termination = Termination::ImprovementThreshold;
            break;
        }
        let step = model.step(&sol.x);
        let mut trial = gains.clone();
        for (k, &param) in bundle.params.iter().enumerate() {
            trial.set(param, gains.get(param) + step[k]);
        }
        project(config, case, &mut trial)?;

        // A candidate that cannot be evaluated (degenerate or unstable) is rejected.
        let candidate = evaluator.evaluate(&trial).ok().map(|b| {
            let j = objective(case, &b, config);
            (b, j)
        });
        let candidate_objective = candidate.as_ref().map(|(_, j)| j.total);
        let mut record = Iteration {
            index,
            accepted: false,
            objective: candidate_objective,
            accepted_objective: current.total,
            predicted_decrease: predicted,
            gains: trial.to_vec(),
            step_limits: limits.clone(),
            metrics: candidate.as_ref().map(|(b, _)| MetricSummary::from(b)),
            total_capacity: required_capacities(case, config, &trial).iter().sum(),
        };
        match candidate {
            Some((b, j)) if j.total < current.total => {
                let gain = current.total - j.total;
                let small = gain < threshold(current.total);
                gains = trial;
                bundle = b;
                current = j;
                record.accepted = true;
                record.accepted_objective = current.total;
                history.push(record);
                if small {
                    termination = Termination::ImprovementThreshold;
                    break;
                }
            }
            _ => {
                // Halve the region around the rejected step. Parameters that hit
                // their limit are halved; ones stopped earlier (by capability
                // cuts, say) shrink to half their step so the LP cannot repeat it.
                let moved = step.iter().any(|s| *s != 0.0);
                for (l, s) in limits.iter_mut().zip(&step) {
                    if !moved {
                        *l *= 0.5;
                    } else if *s != 0.0 {
                        *l = 0.5 * l.min(s.abs());
                    }
                }
                history.push(record);
            }
        }
    }

    let capacities = required_capacities(case, config, &gains);
    Ok(PlacementResult {
        termination,
        summary: MetricSummary::from(&bundle),
        total_capacity: capacities.iter().sum(),
        capacities,
        bounds_met: current.violation <= BOUND_TOLERANCE,
        objective: current,
        gains,
        history,
        metrics: bundle,
    })
}

/// Minimises total device rating subject to the configured metric bounds.
/// Cost weights are ignored; the capacity cost defaults to 1 per pu.
pub fn min_capacity_place(case: &PowerSystemCase, config: &PlacementConfig) -> Result<PlacementResult> {
    if !config.bounds.is_set() {
        return Err(Error::Config("minimum-capacity placement needs metric bounds".into()));
    }
    let mut cfg = config.clone();
    cfg.weights = Default::default();
    cfg.budget = match config.budget {
        Budget::Variable { cost } if cost > 0.0 => Budget::Variable { cost },
        _ => Budget::Variable { cost: 1.0 },
    };
    place(case, &cfg)
}
