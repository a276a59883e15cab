#![allow(clippy::needless_range_loop)]

use inertia_core::netmodel::{load_case, DeviceGains, GainKind, ParamId, PowerSystemCase};
use inertia_core::placement::*;
use inertia_core::response::simulate_system;

fn three_bus() -> PowerSystemCase {
    load_case(include_str!("../../../cases/three_bus.json")).unwrap()
}

fn gains(values: &[f64]) -> DeviceGains {
    DeviceGains::from_slice(values)
}

fn config(json: &str) -> PlacementConfig {
    PlacementConfig::from_json(json).unwrap()
}

fn assert_close(a: f64, b: f64, tol: f64, what: &str) {
    assert!((a - b).abs() <= tol * (1.0 + b.abs()), "{what}: {a} vs {b}");
}

#[test]
fn zero_gains_match_device_free_system() {
    let case = three_bus();
    let mut bare = case.clone();
    bare.devices.clear();
    let with = evaluate(&case, &DeviceGains::zeros(2)).unwrap();
    let without = evaluate(&bare, &DeviceGains::zeros(0)).unwrap();

    for (a, b) in with.rocof.entries.iter().zip(&without.rocof.entries) {
        assert_close(a.value, b.value, 1e-10, "rocof");
    }
    for (a, b) in with.overshoot.entries.iter().zip(&without.overshoot.entries) {
        assert_close(a.value, b.value, 1e-10, "overshoot");
    }
    // Idle device lags add real poles only.
    assert_eq!(with.modes.len(), without.modes.len());
    assert_close(with.zeta_min, without.zeta_min, 1e-10, "zeta_min");
}

#[test]
fn metrics_ignore_device_order() {
    let case = three_bus();
    let mut swapped = case.clone();
    swapped.devices.reverse();
    let a = evaluate(&case, &gains(&[2.0, 1.0, 0.5, 3.0])).unwrap();
    let b = evaluate(&swapped, &gains(&[0.5, 3.0, 2.0, 1.0])).unwrap();

    assert_close(a.zeta_min, b.zeta_min, 1e-9, "zeta_min");
    for (x, y) in a.rocof.entries.iter().zip(&b.rocof.entries) {
        assert_close(x.value, y.value, 1e-9, "rocof");
    }
    for (x, y) in a.overshoot.entries.iter().zip(&b.overshoot.entries) {
        assert_close(x.value, y.value, 1e-9, "overshoot");
    }
    // Parameter k of one ordering is parameter (k + 2) mod 4 of the other.
    for k in 0..4 {
        let j = (k + 2) % 4;
        for (x, y) in a.d_rocof[k].iter().zip(&b.d_rocof[j]) {
            assert_close(*x, *y, 1e-7, "d_rocof");
        }
    }
}

#[test]
fn doubling_a_disturbance_doubles_its_columns() {
    let mut case = three_bus();
    case.disturbances.push(inertia_core::netmodel::Disturbance { bus: 1, magnitude: -0.05 });
    let g = gains(&[1.0, 2.0, 2.0, 1.0]);
    let base = evaluate(&case, &g).unwrap();
    case.disturbances[1].magnitude *= 2.0;
    let doubled = evaluate(&case, &g).unwrap();

    for o in 0..base.rocof.outputs {
        assert_close(doubled.rocof.get(o, 0).value, base.rocof.get(o, 0).value, 1e-10, "untouched rocof");
        assert_close(doubled.rocof.get(o, 1).value, 2.0 * base.rocof.get(o, 1).value, 1e-10, "rocof");
        assert_close(doubled.overshoot.get(o, 1).value, 2.0 * base.overshoot.get(o, 1).value, 1e-10, "overshoot");
    }

    // The doubled extrema are also what an ODE integration sees at the peak times.
    let sys = Evaluator::new(&case).unwrap().system(&g).unwrap();
    let horizon = doubled.overshoot.entries.iter().map(|e| e.time).fold(1.0, f64::max) + 1.0;
    let traj = simulate_system(&sys, horizon, 1e-11).unwrap();
    for o in 0..doubled.overshoot.outputs {
        let e = doubled.overshoot.get(o, 1);
        let (y, _, _) = traj.sample(e.time);
        assert!((y[(o, 1)].abs() / std::f64::consts::TAU - e.value).abs() < 1e-7);
        let r = doubled.rocof.get(o, 1);
        let (_, dy, _) = traj.sample(r.time);
        assert!((dy[(o, 1)].abs() / std::f64::consts::TAU - r.value).abs() < 1e-7);
    }
}

// Relative errors are taken per Jacobian (one quantity against every
// parameter) so entries that are tiny by physics do not magnify roundoff.
#[test]
fn bundle_sensitivities_match_finite_differences() {
    let case = three_bus();
    let ev = Evaluator::new(&case).unwrap();
    let at = [1.5, 2.0, 2.5, 1.0];
    let bundle = ev.evaluate(&gains(&at)).unwrap();
    let eps = 1e-5;
    let values = |m: &inertia_core::response::ExtremumMatrix| m.entries.iter().map(|e| e.value).collect::<Vec<f64>>();
    let zetas = |b: &MetricBundle| b.modes.iter().map(|m| m.zeta).collect::<Vec<f64>>();

    let mut numeric: [Vec<Vec<f64>>; 3] = Default::default();
    for k in 0..at.len() {
        let shifted = |d: f64| {
            let mut v = at;
            v[k] += d;
            ev.metrics(&gains(&v)).unwrap()
        };
        let (hi, lo) = (shifted(eps), shifted(-eps));
        let fd = |a: Vec<f64>, b: Vec<f64>| a.iter().zip(b).map(|(x, y)| (x - y) / (2.0 * eps)).collect::<Vec<f64>>();
        numeric[0].push(fd(values(&hi.rocof), values(&lo.rocof)));
        numeric[1].push(fd(values(&hi.overshoot), values(&lo.overshoot)));
        numeric[2].push(fd(zetas(&hi), zetas(&lo)));
    }
    let dz: Vec<Vec<f64>> = (0..at.len()).map(|k| bundle.modes.iter().map(|m| m.sensitivity[k]).collect()).collect();
    for (name, analytic, numeric, tol) in [
        ("rocof", &bundle.d_rocof, &numeric[0], 1e-3),
        ("overshoot", &bundle.d_overshoot, &numeric[1], 1e-3),
        ("zeta", &dz, &numeric[2], 1e-5),
    ] {
        let flat = |m: &Vec<Vec<f64>>| m.iter().flatten().copied().collect::<Vec<f64>>();
        let (a, n) = (flat(analytic), flat(numeric));
        let scale = a.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let err = a.iter().zip(&n).fold(0.0f64, |m, (x, y)| m.max((x - y).abs()));
        assert!(err < tol * scale, "{name}: rel err {:e}", err / scale);
    }
}

#[test]
fn flat_model_keeps_the_gains() {
    let case = three_bus();
    let cfg = config(r#"{"weights": {"zeta": 1, "rocof_max": 2, "overshoot_mean": 1}}"#);
    let mut bundle = evaluate(&case, &gains(&[1.0, 1.0, 1.0, 1.0])).unwrap();
    for row in bundle.d_rocof.iter_mut().chain(bundle.d_overshoot.iter_mut()) {
        row.iter_mut().for_each(|v| *v = 0.0);
    }
    for m in &mut bundle.modes {
        m.sensitivity.iter_mut().for_each(|v| *v = 0.0);
    }
    let model = build_lp(&bundle, &cfg, &case, &[0.5; 4]).unwrap();
    let sol = solve_lp(&model.lp).unwrap();
    assert!(model.step(&sol.x).iter().all(|&s| s == 0.0));
    let expected = -bundle.zeta_min + 2.0 * bundle.r_inf + bundle.s1;
    assert_close(sol.objective, expected, 1e-12, "objective");
}

#[test]
fn favourable_gradient_moves_to_trust_edge() {
    let mut case = three_bus();
    case.devices.truncate(1);
    let cfg = config(r#"{"weights": {"rocof_max": 1}}"#);
    let mut bundle = evaluate(&case, &DeviceGains::zeros(1)).unwrap();
    let pairs = bundle.pairs();
    bundle.d_rocof = vec![vec![-0.1; pairs], vec![0.0; pairs]];
    let model = build_lp(&bundle, &cfg, &case, &[0.3, 0.3]).unwrap();
    let sol = solve_lp(&model.lp).unwrap();
    assert_eq!(model.step(&sol.x), vec![0.3, 0.0]);
    assert_close(model.predicted_decrease(&sol.x), 0.03, 1e-6, "decrease");
}

#[test]
fn slacks_only_for_violated_bounds() {
    let case = three_bus();
    let bundle = evaluate(&case, &DeviceGains::zeros(2)).unwrap();
    let values: Vec<f64> = bundle.rocof.entries.iter().map(|e| e.value).collect();
    let mid = (values[0] + values[1]) / 2.0;
    assert!(values[0] != values[1]);
    let cfg = config(&format!(r#"{{"weights": {{"rocof_max": 1}}, "bounds": {{"rocof": {{"hi": {mid}}}}}}}"#));
    let model = build_lp(&bundle, &cfg, &case, &[0.5; 4]).unwrap();

    for (e, v) in values.iter().enumerate() {
        let name = format!("eps_rocof_hi[{e}]");
        let idx = model.lp.names.iter().position(|n| *n == name);
        if *v > mid {
            let i = idx.expect("slack for violated bound");
            assert_eq!(model.lp.lower[i], 0.0);
            assert_eq!(model.lp.objective[i], cfg.penalties.rocof);
        } else {
            assert!(idx.is_none(), "slack {name} for a satisfied bound");
        }
    }
}

#[test]
fn linear_model_error_is_second_order() {
    let case = three_bus();
    let ev = Evaluator::new(&case).unwrap();
    let at = [1.0, 1.0, 1.0, 1.0];
    let dir = [1.0, 0.5, -0.5, 1.0];
    let bundle = ev.evaluate(&gains(&at)).unwrap();

    let mean_error = |delta: f64| {
        let moved: Vec<f64> = at.iter().zip(dir).map(|(a, d)| a + delta * d).collect();
        let b = ev.metrics(&gains(&moved)).unwrap();
        let mut total = 0.0;
        let mut n = 0.0;
        for (ext, new, sens) in
            [(&bundle.rocof, &b.rocof, &bundle.d_rocof), (&bundle.overshoot, &b.overshoot, &bundle.d_overshoot)]
        {
            for e in 0..ext.entries.len() {
                let predicted: f64 = (0..4).map(|k| sens[k][e] * delta * dir[k]).sum();
                total += (new.entries[e].value - ext.entries[e].value - predicted).abs();
                n += 1.0;
            }
        }
        total / n
    };
    let ratio = mean_error(0.2) / mean_error(0.1);
    assert!((3.0..5.0).contains(&ratio), "error ratio {ratio}");
}

fn capability_violation(case: &PowerSystemCase, cfg: &PlacementConfig, values: &[f64]) -> f64 {
    let g = gains(values);
    g.devices
        .iter()
        .enumerate()
        .map(|(v, d)| {
            let c = cfg.device_capability(case, v).constraint(case.devices[v].capacity).unwrap();
            (c.norm(d.inertia, d.damping) - c.bound).max(0.0)
        })
        .fold(0.0, f64::max)
}

#[test]
fn accepted_objectives_never_increase() {
    let case = three_bus();
    for json in [
        r#"{"weights": {"zeta": 1}}"#,
        r#"{"weights": {"rocof_max": 1, "overshoot_max": 0.5}, "capability": {"p": 2, "h": 1, "c": 1}}"#,
        r#"{"weights": {"rocof_mean": 1, "overshoot_mean": 1}, "capability": {"p": "inf", "h": 0.5, "c": 1}}"#,
        r#"{"weights": {"overshoot_max": 1}, "bounds": {"zeta_min": 0.08, "rocof": {"hi": 0.2}}}"#,
    ] {
        let cfg = config(json);
        let r = place(&case, &cfg).unwrap();
        let acc = r.accepted_objectives();
        assert!(acc.windows(2).all(|w| w[1] <= w[0]), "{json}: {acc:?}");
        assert!(acc.last().unwrap() < &acc[0], "{json}: no progress");
        for h in r.history.iter().filter(|h| h.accepted) {
            assert!(capability_violation(&case, &cfg, &h.gains) <= 1e-9, "{json}");
        }
    }
}

#[test]
fn zeta_weight_raises_damping_each_accepted_step() {
    let mut case = three_bus();
    case.devices.remove(0);
    let r = place(&case, &config(r#"{"weights": {"zeta": 1}}"#)).unwrap();
    let zetas: Vec<f64> = r.history.iter().filter(|h| h.accepted).map(|h| h.metrics.unwrap().zeta_min).collect();
    assert!(zetas.len() > 2);
    assert!(zetas.windows(2).all(|w| w[1] > w[0]), "{zetas:?}");
}

#[test]
fn zero_budget_keeps_gains_at_zero() {
    let case = three_bus();
    let r = place(&case, &config(r#"{"weights": {"rocof_max": 1}, "budget": {"mode": "total", "total": 0}}"#)).unwrap();
    assert!(r.gains.to_vec().iter().all(|&v| v == 0.0));
    assert_eq!(r.termination, Termination::ImprovementThreshold);
}

#[test]
fn total_budget_is_respected() {
    let case = three_bus();
    let r =
        place(&case, &config(r#"{"weights": {"rocof_max": 1}, "budget": {"mode": "total", "total": 0.15}}"#)).unwrap();
    assert!(r.total_capacity <= 0.15 + 1e-9, "{}", r.total_capacity);
    assert!(r.total_capacity > 0.1);
}

#[test]
fn min_capacity_is_zero_for_loose_bounds() {
    let case = three_bus();
    let r = min_capacity_place(&case, &config(r#"{"bounds": {"rocof": {"hi": 1.0}, "zeta_min": 0.001}}"#)).unwrap();
    assert_eq!(r.total_capacity, 0.0);
    assert!(r.bounds_met);
}

#[test]
fn min_capacity_meets_a_binding_rocof_bound() {
    let case = three_bus();
    let free = evaluate(&case, &DeviceGains::zeros(2)).unwrap();
    let hi = 0.2;
    assert!(free.r_inf > hi);
    let r = min_capacity_place(&case, &config(r#"{"bounds": {"rocof": {"hi": 0.2}}}"#)).unwrap();
    assert!(r.bounds_met);
    assert!(r.summary.r_inf <= hi + 1e-6);
    assert!(r.total_capacity > 0.0);
    // The device next to the disturbance carries the rating.
    assert!(r.capacities[1] > 10.0 * r.capacities[0]);
}

#[test]
fn unreachable_bound_reports_violation() {
    let case = three_bus();
    let r = min_capacity_place(&case, &config(r#"{"bounds": {"rocof": {"hi": 0.01}}, "max_iterations": 60}"#)).unwrap();
    assert!(!r.bounds_met);
    assert!(r.objective.violation > 0.0);
}

#[test]
fn min_capacity_needs_bounds() {
    assert!(min_capacity_place(&three_bus(), &PlacementConfig::default()).is_err());
}

#[test]
fn invalid_configs_are_rejected() {
    let case = three_bus();
    for json in [
        r#"{}"#,
        r#"{"weights": {"rocof_max": -1}}"#,
        r#"{"weights": {"rocof_max": 10}, "penalties": {"zeta": 5, "rocof": 1e6, "overshoot": 1e6}}"#,
        r#"{"weights": {"zeta": 1}, "bounds": {"rocof": {"lo": 0.3, "hi": 0.2}}}"#,
        r#"{"weights": {"zeta": 1}, "capability": {"p": 1, "h": 0, "c": 1}}"#,
    ] {
        assert!(place(&case, &config(json)).is_err(), "{json}");
    }
}

#[test]
fn infeasible_initial_gains_are_rejected() {
    let case = three_bus();
    let cfg = config(r#"{"weights": {"zeta": 1}}"#);
    assert!(place_from(&case, &cfg, &gains(&[50.0, 0.0, 0.0, 0.0])).is_err());
}

#[test]
fn placement_is_deterministic() {
    let case = three_bus();
    let cfg = config(r#"{"weights": {"rocof_mean": 1, "overshoot_max": 1}, "capability": {"p": 2, "h": 1, "c": 1}}"#);
    let a = serde_json::to_string(&place(&case, &cfg).unwrap()).unwrap();
    let b = serde_json::to_string(&place(&case, &cfg).unwrap()).unwrap();
    assert_eq!(a, b);
}

#[test]
fn parameters_follow_device_order() {
    let bundle = evaluate(&three_bus(), &DeviceGains::zeros(2)).unwrap();
    let expected = [(0, GainKind::Inertia), (0, GainKind::Damping), (1, GainKind::Inertia), (1, GainKind::Damping)];
    let got: Vec<(usize, GainKind)> = bundle.params.iter().map(|p: &ParamId| (p.device, p.kind)).collect();
    assert_eq!(got, expected);
}
