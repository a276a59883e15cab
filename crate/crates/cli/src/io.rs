use std::f64::consts::TAU;
use std::fs;
use std::path::{Path, PathBuf};

use inertia_core::netmodel::{load_case, DeviceGains, LinearSystem, PowerSystemCase};
use inertia_core::response::{residues, search_grid, simulate_system, ResidueSet};
use inertia_core::spectral::eigensolve;
use serde::Serialize;

use crate::{CliError, CliResult};

/// Samples per trajectory file.
pub const TRAJECTORY_POINTS: usize = 1001;
/// Longest trajectory written, in seconds.
pub const TRAJECTORY_HORIZON: f64 = 30.0;

pub fn read_text(path: &Path) -> CliResult<String> {
    fs::read_to_string(path).map_err(|e| CliError::Input(format!("cannot read {}: {e}", path.display())))
}

pub fn read_case(path: &Path) -> CliResult<PowerSystemCase> {
    load_case(&read_text(path)?).map_err(|e| CliError::from_core(&path.display().to_string(), e))
}

/// Gains from a gains document, or from the `gains` member of a placement
/// result document. Falls back to the case when `path` is `None`.
pub fn read_gains(path: Option<&Path>, case: &PowerSystemCase) -> CliResult<DeviceGains> {
    let Some(path) = path else {
        return Ok(DeviceGains::from_case(case));
    };
    let bad = |m: String| CliError::Input(format!("{}: {m}", path.display()));
    let value: serde_json::Value = serde_json::from_str(&read_text(path)?).map_err(|e| bad(e.to_string()))?;
    let doc = value
        .get("devices")
        .map(|_| &value)
        .or_else(|| value.get("gains"))
        .or_else(|| value.get("result").and_then(|r| r.get("gains")))
        .ok_or_else(|| bad("expected a gains document or a placement result".into()))?;
    let gains: DeviceGains = serde_json::from_value(doc.clone()).map_err(|e| bad(e.to_string()))?;
    if gains.devices.len() != case.devices.len() {
        return Err(bad(format!("{} gains for {} devices", gains.devices.len(), case.devices.len())));
    }
    gains.validate().map_err(|e| CliError::from_core(&path.display().to_string(), e))?;
    Ok(gains)
}

pub fn create_dir(path: &Path) -> CliResult<()> {
    fs::create_dir_all(path).map_err(|e| CliError::Input(format!("cannot create {}: {e}", path.display())))
}

pub fn write_file(path: &Path, contents: &str) -> CliResult<()> {
    if let Some(parent) = path.parent() {
        create_dir(parent)?;
    }
    fs::write(path, contents).map_err(|e| CliError::Input(format!("cannot write {}: {e}", path.display())))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> CliResult<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| CliError::Numerical(e.to_string()))?;
    text.push('\n');
    write_file(path, &text)
}

/// Sampled step response of one (output, disturbance) pair.
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub output_bus: usize,
    pub disturbance_bus: usize,
    pub times: Vec<f64>,
    pub freq_dev_hz: Vec<f64>,
    pub rocof_hz_s: Vec<f64>,
}

impl Trajectory {
    pub fn file_name(&self) -> String {
        format!("trajectory_out{}_dist{}.csv", self.output_bus, self.disturbance_bus)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("time_s,freq_dev_hz,rocof_hz_s\n");
        for k in 0..self.times.len() {
            out.push_str(&format!("{},{},{}\n", self.times[k], self.freq_dev_hz[k], self.rocof_hz_s[k]));
        }
        out
    }
}

/// Residues of `sys`, with model context on failure.
pub fn modal_residues(sys: &LinearSystem) -> CliResult<ResidueSet> {
    let modal = eigensolve(&sys.a).map_err(|e| CliError::from_core("eigen-decomposition", e))?;
    residues(&modal, &sys.scaled_input(), &sys.c).map_err(|e| CliError::from_core("residues", e))
}

/// Modal trajectories of every pair over the settling horizon (capped).
pub fn trajectories(sys: &LinearSystem, res: &ResidueSet) -> CliResult<Vec<Trajectory>> {
    let grid = search_grid(&res.eigenvalues).map_err(|e| CliError::from_core("search grid", e))?;
    let horizon = grid.horizon.min(TRAJECTORY_HORIZON);
    let times: Vec<f64> = (0..TRAJECTORY_POINTS).map(|k| horizon * k as f64 / (TRAJECTORY_POINTS - 1) as f64).collect();
    let mut out = Vec::new();
    for (o, &ob) in sys.output_buses.iter().enumerate() {
        for (j, &db) in sys.disturbance_buses.iter().enumerate() {
            let pair = res.pair(o, j);
            out.push(Trajectory {
                output_bus: ob,
                disturbance_bus: db,
                freq_dev_hz: times.iter().map(|&t| pair.eval(t, 0) / TAU).collect(),
                rocof_hz_s: times.iter().map(|&t| pair.eval(t, 1) / TAU).collect(),
                times: times.clone(),
            });
        }
    }
    Ok(out)
}

pub fn write_trajectories(dir: &Path, trajs: &[Trajectory]) -> CliResult<Vec<PathBuf>> {
    trajs
        .iter()
        .map(|t| {
            let path = dir.join(t.file_name());
            write_file(&path, &t.to_csv()).map(|_| path)
        })
        .collect()
}

/// Largest gap between the modal trajectories and an adaptive ODE
/// integration of `sys`, in Hz and Hz/s.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct OracleCheck {
    pub max_freq_error_hz: f64,
    pub max_rocof_error_hz_s: f64,
    pub tolerance: f64,
    pub passed: bool,
}

pub const ORACLE_TOLERANCE: f64 = 1e-6;

pub fn oracle_check(sys: &LinearSystem, trajs: &[Trajectory]) -> CliResult<OracleCheck> {
    let horizon = trajs.first().and_then(|t| t.times.last().copied()).unwrap_or(0.0);
    let oracle =
        simulate_system(sys, horizon.max(1e-3), 1e-11).map_err(|e| CliError::from_core("oracle integration", e))?;
    let mut fe = 0.0f64;
    let mut re = 0.0f64;
    let ni = sys.disturbance_buses.len();
    for (p, traj) in trajs.iter().enumerate() {
        let (o, j) = (p / ni, p % ni);
        for (k, &t) in traj.times.iter().enumerate() {
            let (y, dy, _) = oracle.sample(t);
            fe = fe.max((y[(o, j)] / TAU - traj.freq_dev_hz[k]).abs());
            re = re.max((dy[(o, j)] / TAU - traj.rocof_hz_s[k]).abs());
        }
    }
    Ok(OracleCheck {
        max_freq_error_hz: fe,
        max_rocof_error_hz_s: re,
        tolerance: ORACLE_TOLERANCE,
        passed: fe <= ORACLE_TOLERANCE && re <= ORACLE_TOLERANCE,
    })
}
