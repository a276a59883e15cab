use std::collections::BTreeSet;
use std::path::Path;

use inertia_core::capability::{
    dual_constraint, fit_norm_ball, load_measurements, verify_duality, CapabilityBall, DualityReport, GainConstraint,
    MeasurementSet, NormOrder,
};
use inertia_core::netmodel::{DeviceGains, PowerSystemCase};
use inertia_core::placement::{
    min_capacity_place, place as run_placement, CapabilityParams, Evaluator, MetricBundle, ModeDamping,
    PlacementConfig, PlacementResult,
};
use inertia_core::response::{residues, simulate_oracle, ExtremumMatrix};
use inertia_core::spectral::eigensolve;
use serde::Serialize;

use crate::args::{AnalyzeArgs, FitArgs, PlaceArgs, VerifyArgs};
use crate::io::{
    create_dir, modal_residues, oracle_check, read_case, read_gains, read_text, trajectories, write_file, write_json,
    write_trajectories, OracleCheck, Trajectory,
};
use crate::report::{sig6, ReportRow, ReportTable};
use crate::synthetic::{elliptical_cloud, stable_system};
use crate::{CliError, CliResult};

fn core_err(context: &'static str) -> impl Fn(inertia_core::Error) -> CliError {
    move |e| CliError::from_core(context, e)
}

fn case_label(case: &PowerSystemCase, path: &Path) -> String {
    case.name.clone().unwrap_or_else(|| stem(path))
}

fn stem(path: &Path) -> String {
    path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| "run".into())
}

fn write_report(dir: &Path, table: &ReportTable) -> CliResult<()> {
    write_file(&dir.join("report.csv"), &table.to_csv())?;
    write_file(&dir.join("report.txt"), &table.to_text())
}

#[derive(Serialize)]
struct AnalyzeDoc<'a> {
    case: String,
    gains: &'a DeviceGains,
    report: &'a ReportRow,
    modes: &'a [ModeDamping],
    overshoot_hz: &'a ExtremumMatrix,
    rocof_hz_s: &'a ExtremumMatrix,
    verification: Option<OracleCheck>,
}

/// Evaluates one gain setting and writes its trajectories into `dir`.
fn evaluate_and_sample(
    ev: &Evaluator,
    gains: &DeviceGains,
    dir: &Path,
) -> CliResult<(MetricBundle, Vec<Trajectory>, inertia_core::netmodel::LinearSystem)> {
    let bundle = ev.metrics(gains).map_err(core_err("metric evaluation"))?;
    let sys = ev.system(gains).map_err(core_err("closed-loop model"))?;
    let res = modal_residues(&sys)?;
    let trajs = trajectories(&sys, &res)?;
    write_trajectories(dir, &trajs)?;
    Ok((bundle, trajs, sys))
}

pub fn analyze(a: &AnalyzeArgs) -> CliResult<()> {
    let case = read_case(&a.case)?;
    let gains = read_gains(a.gains.as_deref(), &case)?;
    let ev = Evaluator::new(&case).map_err(core_err("network model"))?;
    create_dir(&a.out_dir)?;
    let (bundle, trajs, sys) = evaluate_and_sample(&ev, &gains, &a.out_dir.join("trajectories"))?;

    let label = case_label(&case, &a.case);
    let row = ReportRow::from_bundle(&label, &bundle);
    let verification = if a.verify { Some(oracle_check(&sys, &trajs)?) } else { None };
    let mut table = ReportTable::default();
    table.push(row.clone());
    write_report(&a.out_dir, &table)?;
    write_json(
        &a.out_dir.join("metrics.json"),
        &AnalyzeDoc {
            case: label,
            gains: &gains,
            report: &row,
            modes: &bundle.modes,
            overshoot_hz: &bundle.overshoot,
            rocof_hz_s: &bundle.rocof,
            verification,
        },
    )?;
    print!("{}", table.to_text());
    check_oracle(verification)
}

fn check_oracle(v: Option<OracleCheck>) -> CliResult<()> {
    match v {
        Some(v) if !v.passed => Err(CliError::Verification(format!(
            "modal and integrated trajectories differ by {} Hz / {} Hz/s (tolerance {})",
            sig6(v.max_freq_error_hz),
            sig6(v.max_rocof_error_hz_s),
            v.tolerance
        ))),
        Some(v) => {
            println!(
                "oracle check passed (max error {} Hz, {} Hz/s)",
                sig6(v.max_freq_error_hz),
                sig6(v.max_rocof_error_hz_s)
            );
            Ok(())
        }
        None => Ok(()),
    }
}

#[derive(Serialize)]
struct PlaceDoc<'a> {
    case: &'a str,
    label: &'a str,
    mode: &'static str,
    config: &'a PlacementConfig,
    result: &'a PlacementResult,
    verification: Option<OracleCheck>,
}

/// Labels from config file stems, made unique with a numeric suffix.
fn unique_labels(paths: &[std::path::PathBuf]) -> Vec<String> {
    let mut seen = BTreeSet::new();
    paths
        .iter()
        .map(|p| {
            let base = stem(p);
            let mut label = base.clone();
            let mut k = 2;
            while base == "initial" && label == "initial" || !seen.insert(label.clone()) {
                label = format!("{base}-{k}");
                k += 1;
            }
            label
        })
        .collect()
}

fn allocation_csv(case: &PowerSystemCase, r: &PlacementResult) -> String {
    let mut out = String::from("device,bus,inertia,damping,required_capacity,rating\n");
    for (v, g) in r.gains.devices.iter().enumerate() {
        out.push_str(&format!(
            "{v},{},{},{},{},{}\n",
            case.devices[v].bus, g.inertia, g.damping, r.capacities[v], case.devices[v].capacity
        ));
    }
    out
}

fn history_csv(r: &PlacementResult) -> String {
    let mut out = String::from(
        "iteration,accepted,objective,accepted_objective,predicted_decrease,total_capacity,max_step_limit\n",
    );
    for h in &r.history {
        let objective = h.objective.map(|v| v.to_string()).unwrap_or_default();
        let limit = h.step_limits.iter().copied().fold(0.0, f64::max);
        out.push_str(&format!(
            "{},{},{objective},{},{},{},{limit}\n",
            h.index, h.accepted, h.accepted_objective, h.predicted_decrease, h.total_capacity
        ));
    }
    out
}

pub fn place(a: &PlaceArgs) -> CliResult<()> {
    let mut case = read_case(&a.case)?;
    let initial = read_gains(a.gains.as_deref(), &case)?;
    for (d, g) in case.devices.iter_mut().zip(&initial.devices) {
        d.inertia = g.inertia;
        d.damping = g.damping;
    }
    let configs = a
        .config
        .iter()
        .map(|p| {
            PlacementConfig::from_json(&read_text(p)?).map_err(|e| CliError::from_core(&p.display().to_string(), e))
        })
        .collect::<CliResult<Vec<_>>>()?;
    let labels = unique_labels(&a.config);
    let name = case_label(&case, &a.case);
    let ev = Evaluator::new(&case).map_err(core_err("network model"))?;
    create_dir(&a.out_dir)?;
    let traj_dir = a.out_dir.join("trajectories");

    let mut table = ReportTable::default();
    let (before, _, _) = evaluate_and_sample(&ev, &initial, &traj_dir.join("initial"))?;
    table.push(ReportRow::from_bundle("initial", &before));

    let mut failures = Vec::new();
    for (cfg, label) in configs.iter().zip(&labels) {
        let run = if a.min_capacity { min_capacity_place(&case, cfg) } else { run_placement(&case, cfg) };
        let result = run.map_err(|e| CliError::from_core(&format!("placement {label}"), e))?;
        let (after, trajs, sys) = evaluate_and_sample(&ev, &result.gains, &traj_dir.join(label))?;
        let verification = if a.verify { Some(oracle_check(&sys, &trajs)?) } else { None };
        if verification.is_some_and(|v| !v.passed) {
            failures.push(label.clone());
        }
        table.push(ReportRow::from_bundle(label.as_str(), &after));

        let doc = PlaceDoc {
            case: &name,
            label,
            mode: if a.min_capacity { "min-capacity" } else { "placement" },
            config: cfg,
            result: &result,
            verification,
        };
        write_json(&a.out_dir.join(format!("{label}.result.json")), &doc)?;
        write_file(&a.out_dir.join(format!("{label}.allocation.csv")), &allocation_csv(&case, &result))?;
        write_file(&a.out_dir.join(format!("{label}.history.csv")), &history_csv(&result))?;
        println!(
            "{label}: {} after {} iterations, objective {}, total capacity {} pu, bounds {}",
            serde_json::to_value(result.termination)
                .ok()
                .and_then(|v| v.as_str().map(String::from))
                .unwrap_or_default(),
            result.history.len() - 1,
            sig6(result.objective.total),
            sig6(result.total_capacity),
            if result.bounds_met { "met" } else { "violated" }
        );
    }
    write_report(&a.out_dir, &table)?;
    print!("{}", table.to_text());
    if failures.is_empty() {
        Ok(())
    } else {
        Err(CliError::Verification(format!("oracle mismatch for {}", failures.join(", "))))
    }
}

#[derive(Serialize)]
struct CapabilityDoc {
    samples: usize,
    rocof_derived: bool,
    ball: CapabilityBall,
    capacity: f64,
    constraint: GainConstraint,
    max_inertia: f64,
    max_damping: f64,
    /// Ready to paste into the `capability` field of a placement config.
    placement_capability: CapabilityParams,
    verification: DualityReport,
}

pub fn fit_capability(a: &FitArgs) -> CliResult<()> {
    create_dir(&a.out_dir)?;
    let data: MeasurementSet = match (a.synthetic, &a.measurements) {
        (Some(n), _) => {
            let cloud = elliptical_cloud(n, a.seed);
            write_file(&a.out_dir.join("measurements.csv"), &measurements_csv(&cloud))?;
            cloud
        }
        (None, Some(path)) => {
            load_measurements(&read_text(path)?).map_err(|e| CliError::from_core(&path.display().to_string(), e))?
        }
        (None, None) => return Err(CliError::Input("either --measurements or --synthetic is required".into())),
    };
    if a.resolution < 8 {
        return Err(CliError::Input("--resolution must be at least 8".into()));
    }
    let ball = fit_norm_ball(&data, a.p, a.h, a.coverage).map_err(core_err("capability fit"))?;
    let g = dual_constraint(&ball, a.capacity).map_err(core_err("dual constraint"))?;
    let report = verify_duality(&g, &ball, a.capacity, a.resolution);
    let (max_inertia, max_damping) = g.axis_limits();
    write_json(
        &a.out_dir.join("capability.json"),
        &CapabilityDoc {
            samples: data.len(),
            rocof_derived: data.rocof_derived,
            ball,
            capacity: a.capacity,
            constraint: g,
            max_inertia,
            max_damping,
            placement_capability: ball.into(),
            verification: report,
        },
    )?;
    println!(
        "p = {}: c = {} over {} samples; dual q = {}: ‖(K̃/h, M̃)‖ ≤ {} (M̃ ≤ {}, K̃ ≤ {})",
        ball.p,
        sig6(ball.c),
        data.len(),
        g.q,
        sig6(g.bound),
        sig6(max_inertia),
        sig6(max_damping)
    );
    if report.passed {
        println!("duality check passed (tightness error {})", sig6(report.tightness_error));
        Ok(())
    } else {
        Err(CliError::Verification(format!(
            "duality check failed: max power {} vs capacity {}, tightness error {}",
            sig6(report.max_power),
            sig6(a.capacity),
            sig6(report.tightness_error)
        )))
    }
}

fn measurements_csv(m: &MeasurementSet) -> String {
    let mut out = String::from("time_s,freq_dev_hz,rocof_hz_s\n");
    for s in &m.samples {
        out.push_str(&format!("{},{},{}\n", s.time_s, s.freq_dev_hz, s.rocof_hz_s));
    }
    out
}

#[derive(Debug, Clone, Serialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    /// Observed error measure.
    pub error: f64,
    pub tolerance: f64,
}

impl Check {
    fn new(name: impl Into<String>, error: f64, tolerance: f64) -> Self {
        Check { name: name.into(), passed: error <= tolerance, error, tolerance }
    }
}

/// Modal step response and its first two derivatives against the ODE
/// oracle on `[0, horizon]`, as a largest absolute error.
pub fn modal_oracle_error(
    a: &nalgebra::DMatrix<f64>,
    b: &nalgebra::DMatrix<f64>,
    c: &nalgebra::DMatrix<f64>,
    horizon: f64,
) -> CliResult<f64> {
    let modal = eigensolve(a).map_err(core_err("eigen-decomposition"))?;
    let res = residues(&modal, b, c).map_err(core_err("residues"))?;
    let oracle = simulate_oracle(a, b, c, horizon, 1e-12).map_err(core_err("oracle integration"))?;
    let mut err = 0.0f64;
    for k in 0..=400 {
        let t = horizon * k as f64 / 400.0;
        let sampled = oracle.sample(t);
        for (n, m) in [&sampled.0, &sampled.1, &sampled.2].into_iter().enumerate() {
            for o in 0..c.nrows() {
                for j in 0..b.ncols() {
                    err = err.max((res.pair(o, j).eval(t, n as u32) - m[(o, j)]).abs());
                }
            }
        }
    }
    Ok(err)
}

/// Largest relative error, per Jacobian, of the bundle sensitivities
/// against central differences with step `eps`. Gains closer than `2 eps`
/// to zero are lifted so both stencil points stay admissible.
pub fn sensitivity_errors(ev: &Evaluator, gains: &DeviceGains, eps: f64) -> CliResult<[(String, f64); 3]> {
    let base: Vec<f64> = gains.to_vec().into_iter().map(|v| v.max(2.0 * eps)).collect();
    let bundle = ev.evaluate(&DeviceGains::from_slice(&base)).map_err(core_err("sensitivities"))?;
    let values = |m: &ExtremumMatrix| m.entries.iter().map(|e| e.value).collect::<Vec<f64>>();
    let mut numeric: [Vec<f64>; 3] = Default::default();
    let mut analytic: [Vec<f64>; 3] = Default::default();
    for k in 0..base.len() {
        let at = |d: f64| -> CliResult<MetricBundle> {
            let mut v = base.clone();
            v[k] += d;
            ev.metrics(&DeviceGains::from_slice(&v)).map_err(core_err("perturbed metrics"))
        };
        let (hi, lo) = (at(eps)?, at(-eps)?);
        let fd = |x: Vec<f64>, y: Vec<f64>| x.iter().zip(y).map(|(a, b)| (a - b) / (2.0 * eps)).collect::<Vec<f64>>();
        // Perturbed modes are matched to the base modes by nearest eigenvalue.
        let zetas = |b: &MetricBundle| {
            bundle
                .modes
                .iter()
                .map(|m| {
                    let dist = |o: &ModeDamping| (o.re - m.re).hypot(o.im - m.im);
                    b.modes.iter().min_by(|x, y| dist(x).total_cmp(&dist(y))).map_or(f64::NAN, |o| o.zeta)
                })
                .collect::<Vec<f64>>()
        };
        numeric[0].extend(fd(values(&hi.rocof), values(&lo.rocof)));
        numeric[1].extend(fd(values(&hi.overshoot), values(&lo.overshoot)));
        numeric[2].extend(fd(zetas(&hi), zetas(&lo)));
        analytic[0].extend(&bundle.d_rocof[k]);
        analytic[1].extend(&bundle.d_overshoot[k]);
        analytic[2].extend(bundle.modes.iter().map(|m| m.sensitivity[k]));
    }
    let rel = |a: &[f64], n: &[f64]| {
        let scale = a.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let err = a.iter().zip(n).fold(0.0f64, |m, (x, y)| m.max((x - y).abs()));
        if scale > 0.0 {
            err / scale
        } else {
            err
        }
    };
    Ok([
        ("rocof".into(), rel(&analytic[0], &numeric[0])),
        ("overshoot".into(), rel(&analytic[1], &numeric[1])),
        ("zeta".into(), rel(&analytic[2], &numeric[2])),
    ])
}

pub fn verify(a: &VerifyArgs) -> CliResult<()> {
    let mut checks = Vec::new();
    for k in 0..a.systems {
        let seed = a.seed.wrapping_mul(1000).wrapping_add(k as u64);
        let n = 4 + (seed % 9) as usize;
        let (sa, sb, sc) = stable_system(n, 2, 2, seed);
        checks.push(Check::new(
            format!("random system {k} (n = {n}) matches the oracle"),
            modal_oracle_error(&sa, &sb, &sc, 20.0)?,
            1e-8,
        ));
    }

    let cloud = elliptical_cloud(400, a.seed);
    for p in [NormOrder::One, NormOrder::Two, NormOrder::Inf] {
        let ball = fit_norm_ball(&cloud, p, 4.0, 1.0).map_err(core_err("capability fit"))?;
        let g = dual_constraint(&ball, 0.5).map_err(core_err("dual constraint"))?;
        let r = verify_duality(&g, &ball, 0.5, 2000);
        let error = if r.passed { r.tightness_error } else { f64::INFINITY };
        checks.push(Check::new(format!("duality p = {p}"), error, 1e-6));
    }

    if let Some(path) = &a.case {
        let case = read_case(path)?;
        let gains = read_gains(a.gains.as_deref(), &case)?;
        let ev = Evaluator::new(&case).map_err(core_err("network model"))?;
        let sys = ev.system(&gains).map_err(core_err("closed-loop model"))?;
        let res = modal_residues(&sys)?;
        let trajs = trajectories(&sys, &res)?;
        let oc = oracle_check(&sys, &trajs)?;
        checks.push(Check::new(
            "case trajectories match the oracle",
            oc.max_freq_error_hz.max(oc.max_rocof_error_hz_s),
            oc.tolerance,
        ));
        if !case.devices.is_empty() {
            for (name, err) in sensitivity_errors(&ev, &gains, 1e-5)? {
                let tol = if name == "zeta" { 1e-5 } else { 1e-3 };
                checks.push(Check::new(format!("d{name} matches finite differences"), err, tol));
            }
        }
    }

    for c in &checks {
        println!(
            "{} {} (error {}, tolerance {})",
            if c.passed { "PASS" } else { "FAIL" },
            c.name,
            sig6(c.error),
            sig6(c.tolerance)
        );
    }
    if let Some(dir) = &a.out_dir {
        create_dir(dir)?;
        write_json(&dir.join("verify.json"), &checks)?;
    }
    let failed = checks.iter().filter(|c| !c.passed).count();
    if failed > 0 {
        return Err(CliError::Verification(format!("{failed} of {} checks failed", checks.len())));
    }
    Ok(())
}
