use std::fmt;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::case::PowerSystemCase;
use super::kron::kron_reduce;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GainKind {
    /// Synthetic inertia M̃, acting on the derivative of frequency.
    Inertia,
    /// Synthetic damping K̃, acting on frequency.
    Damping,
}

/// Identifies one optimisable device gain.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ParamId {
    pub device: usize,
    pub kind: GainKind,
}

impl ParamId {
    /// Position in the flat parameter vector `[M̃0, K̃0, M̃1, K̃1, ...]`.
    pub fn index(&self) -> usize {
        2 * self.device + usize::from(self.kind == GainKind::Damping)
    }

    pub fn from_index(index: usize) -> Self {
        let kind = if index.is_multiple_of(2) { GainKind::Inertia } else { GainKind::Damping };
        ParamId { device: index / 2, kind }
    }
}

impl fmt::Display for ParamId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.kind {
            GainKind::Inertia => write!(f, "M[{}]", self.device),
            GainKind::Damping => write!(f, "K[{}]", self.device),
        }
    }
}

/// A matrix with a single nonzero entry.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SparseEntry {
    pub row: usize,
    pub col: usize,
    pub value: f64,
}

impl SparseEntry {
    pub fn to_dense(&self, n: usize) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(n, n);
        m[(self.row, self.col)] = self.value;
        m
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ParamEntry {
    pub param: ParamId,
    pub entry: SparseEntry,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Gain {
    pub inertia: f64,
    pub damping: f64,
}

impl Gain {
    pub fn get(&self, kind: GainKind) -> f64 {
        match kind {
            GainKind::Inertia => self.inertia,
            GainKind::Damping => self.damping,
        }
    }

    pub fn set(&mut self, kind: GainKind, value: f64) {
        match kind {
            GainKind::Inertia => self.inertia = value,
            GainKind::Damping => self.damping = value,
        }
    }
}

/// Per-device synthetic inertia and damping.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeviceGains {
    pub devices: Vec<Gain>,
}

impl DeviceGains {
    pub fn zeros(n: usize) -> Self {
        DeviceGains { devices: vec![Gain { inertia: 0.0, damping: 0.0 }; n] }
    }

    /// Initial gains declared in the case file.
    pub fn from_case(case: &PowerSystemCase) -> Self {
        DeviceGains { devices: case.devices.iter().map(|d| Gain { inertia: d.inertia, damping: d.damping }).collect() }
    }

    pub fn len(&self) -> usize {
        self.devices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.devices.is_empty()
    }

    pub fn get(&self, param: ParamId) -> f64 {
        self.devices[param.device].get(param.kind)
    }

    pub fn set(&mut self, param: ParamId, value: f64) {
        self.devices[param.device].set(param.kind, value)
    }

    /// Flat vector `[M̃0, K̃0, M̃1, K̃1, ...]`.
    pub fn to_vec(&self) -> Vec<f64> {
        self.devices.iter().flat_map(|g| [g.inertia, g.damping]).collect()
    }

    pub fn from_slice(values: &[f64]) -> Self {
        DeviceGains { devices: values.chunks(2).map(|c| Gain { inertia: c[0], damping: c[1] }).collect() }
    }

    pub fn validate(&self) -> Result<()> {
        for (v, g) in self.devices.iter().enumerate() {
            if !(g.inertia >= 0.0 && g.damping >= 0.0 && g.inertia.is_finite() && g.damping.is_finite()) {
                return Err(Error::invalid(
                    format!("gains of device {v}"),
                    format!("must be finite and non-negative, got M={} K={}", g.inertia, g.damping),
                ));
            }
        }
        Ok(())
    }

    pub fn total_inertia(&self) -> f64 {
        self.devices.iter().map(|g| g.inertia).sum()
    }

    pub fn total_damping(&self) -> f64 {
        self.devices.iter().map(|g| g.damping).sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StateLabel {
    GenAngle { bus: usize },
    GenFrequency { bus: usize },
    LoadAngle { bus: usize },
    LoadFrequency { bus: usize },
    DevicePower { device: usize, bus: usize },
    DeviceFrequency { device: usize, bus: usize },
}

impl fmt::Display for StateLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            StateLabel::GenAngle { bus } => write!(f, "delta_G[{bus}]"),
            StateLabel::GenFrequency { bus } => write!(f, "omega_G[{bus}]"),
            StateLabel::LoadAngle { bus } => write!(f, "delta_L[{bus}]"),
            StateLabel::LoadFrequency { bus } => write!(f, "omega_L[{bus}]"),
            StateLabel::DevicePower { device, bus } => write!(f, "P_v{device}[{bus}]"),
            StateLabel::DeviceFrequency { device, bus } => write!(f, "omega_v{device}[{bus}]"),
        }
    }
}

/// The dynamic frequency state that represents a bus.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FrequencyState {
    pub bus: usize,
    pub state: usize,
    /// `1 / (M S_B)` of the unit owning the state.
    pub inv_inertia: f64,
}

/// Real state-space model `ẋ = A x + B ΔP`, `y = C x`.
///
/// `B` carries unit-step columns (`1/(M S_B)` on the disturbed unit); the
/// step magnitudes are kept separately in `disturbance_magnitudes`.
#[derive(Debug, Clone)]
pub struct LinearSystem {
    pub a: DMatrix<f64>,
    pub b: DMatrix<f64>,
    pub c: DMatrix<f64>,
    pub disturbance_magnitudes: Vec<f64>,
    pub state_labels: Vec<StateLabel>,
    pub output_buses: Vec<usize>,
    pub disturbance_buses: Vec<usize>,
    pub frequency_states: Vec<FrequencyState>,
    pub registry: Vec<ParamEntry>,
}

impl LinearSystem {
    pub fn states(&self) -> usize {
        self.a.nrows()
    }

    pub fn outputs(&self) -> usize {
        self.c.nrows()
    }

    pub fn inputs(&self) -> usize {
        self.b.ncols()
    }

    /// `B diag(ΔP)`: the input matrix of the actual disturbance steps.
    pub fn scaled_input(&self) -> DMatrix<f64> {
        let mut b = self.b.clone();
        for (j, &m) in self.disturbance_magnitudes.iter().enumerate() {
            b.column_mut(j).scale_mut(m);
        }
        b
    }

    pub fn frequency_state(&self, bus: usize) -> Option<&FrequencyState> {
        self.frequency_states.iter().find(|f| f.bus == bus)
    }

    pub fn params(&self) -> impl Iterator<Item = ParamId> + '_ {
        self.registry.iter().map(|e| e.param)
    }

    /// Overwrites every registered entry of `A` with `gain / (T1 T2)`.
    pub fn set_gains(&mut self, gains: &DeviceGains) -> Result<()> {
        for e in &self.registry {
            let g = gains
                .devices
                .get(e.param.device)
                .ok_or_else(|| Error::UnknownParameter(e.param.to_string()))?
                .get(e.param.kind);
            self.a[(e.entry.row, e.entry.col)] = g * e.entry.value;
        }
        Ok(())
    }
}

/// The sparse `∂A/∂α` of a registered gain.
pub fn system_derivative(sys: &LinearSystem, param: ParamId) -> Result<SparseEntry> {
    sys.registry
        .iter()
        .find(|e| e.param == param)
        .map(|e| e.entry)
        .ok_or_else(|| Error::UnknownParameter(param.to_string()))
}

#[derive(Debug, Clone, Copy)]
enum UnitKind {
    Generator,
    Motor,
}

struct DynamicUnit {
    bus: usize,
    kind: UnitKind,
    network_node: usize,
    inertia: f64,
    damping: f64,
}

/// Assembles the device-free model `(A0, B0, C0)`.
pub fn build_base_system(case: &PowerSystemCase) -> Result<LinearSystem> {
    case.validate()?;

    let nb = case.buses.len();
    let bus_index = |id: usize| case.buses.iter().position(|b| b.id == id).expect("validated bus");

    // Network nodes: buses, then one internal node per motor load.
    let mut units = Vec::new();
    for g in &case.generators {
        units.push(DynamicUnit {
            bus: g.bus,
            kind: UnitKind::Generator,
            network_node: bus_index(g.bus),
            inertia: g.inertia * g.base,
            damping: g.damping,
        });
    }
    let mut motor_links = Vec::new();
    for l in &case.loads {
        let rating = l.motor_rating();
        if rating > 0.0 {
            let node = nb + motor_links.len();
            motor_links.push((bus_index(l.bus), node, rating / l.motor_reactance));
            units.push(DynamicUnit {
                bus: l.bus,
                kind: UnitKind::Motor,
                network_node: node,
                inertia: l.motor_inertia * rating,
                damping: l.damping * l.power,
            });
        }
    }
    if units.is_empty() {
        return Err(Error::invalid("case", "no generators or motor loads"));
    }

    let nn = nb + motor_links.len();
    let mut laplacian = DMatrix::<f64>::zeros(nn, nn);
    let mut couple = |i: usize, j: usize, b: f64| {
        laplacian[(i, i)] += b;
        laplacian[(j, j)] += b;
        laplacian[(i, j)] -= b;
        laplacian[(j, i)] -= b;
    };
    // Angles advance at ω0 per pu of frequency, so stiffness scales with ω0.
    let w0 = 2.0 * std::f64::consts::PI * case.nominal_frequency_hz;
    for line in &case.lines {
        couple(bus_index(line.from), bus_index(line.to), w0 * line.susceptance);
    }
    for &(bus, node, b) in &motor_links {
        couple(bus, node, w0 * b);
    }

    let dynamic: Vec<usize> = units.iter().map(|u| u.network_node).collect();
    let has_infinite = case.buses.iter().any(|b| b.infinite);
    let algebraic: Vec<usize> = (0..nb).filter(|&i| !case.buses[i].infinite && !dynamic.contains(&i)).collect();
    let pick =
        |rows: &[usize], cols: &[usize]| DMatrix::from_fn(rows.len(), cols.len(), |r, c| laplacian[(rows[r], cols[c])]);
    let stiffness = kron_reduce(
        &pick(&dynamic, &dynamic),
        &pick(&dynamic, &algebraic),
        &pick(&algebraic, &dynamic),
        &pick(&algebraic, &algebraic),
    )?;

    // State layout: δ^G, ω^G, δ^L, ω^L, with the reference angle dropped.
    let reference = if case.angle_reference && !has_infinite { Some(0) } else { None };
    let mut labels = Vec::new();
    let mut angle_state = vec![None; units.len()];
    let mut freq_state = vec![0; units.len()];
    for kind in [UnitKind::Generator, UnitKind::Motor] {
        let members: Vec<usize> = (0..units.len())
            .filter(|&u| std::mem::discriminant(&units[u].kind) == std::mem::discriminant(&kind))
            .collect();
        for &u in &members {
            if reference != Some(u) {
                angle_state[u] = Some(labels.len());
                labels.push(match kind {
                    UnitKind::Generator => StateLabel::GenAngle { bus: units[u].bus },
                    UnitKind::Motor => StateLabel::LoadAngle { bus: units[u].bus },
                });
            }
        }
        for &u in &members {
            freq_state[u] = labels.len();
            labels.push(match kind {
                UnitKind::Generator => StateLabel::GenFrequency { bus: units[u].bus },
                UnitKind::Motor => StateLabel::LoadFrequency { bus: units[u].bus },
            });
        }
    }

    let n = labels.len();
    let mut a = DMatrix::<f64>::zeros(n, n);
    for (u, unit) in units.iter().enumerate() {
        if let Some(s) = angle_state[u] {
            a[(s, freq_state[u])] += 1.0;
            if let Some(r) = reference {
                a[(s, freq_state[r])] -= 1.0;
            }
        }
        let w = freq_state[u];
        a[(w, w)] = -unit.damping / unit.inertia;
        for (v, s) in angle_state.iter().enumerate() {
            if let Some(s) = *s {
                a[(w, s)] = -stiffness[(u, v)] / unit.inertia;
            }
        }
    }

    // Generators take precedence when a bus carries both a generator and a motor.
    let mut frequency_states: Vec<FrequencyState> = Vec::new();
    for (u, unit) in units.iter().enumerate() {
        if frequency_states.iter().all(|f| f.bus != unit.bus) {
            frequency_states.push(FrequencyState {
                bus: unit.bus,
                state: freq_state[u],
                inv_inertia: 1.0 / unit.inertia,
            });
        }
    }
    let lookup =
        |bus: usize| frequency_states.iter().find(|f| f.bus == bus).copied().ok_or(Error::NoFrequencyState { bus });

    let mut b = DMatrix::<f64>::zeros(n, case.disturbances.len());
    for (j, d) in case.disturbances.iter().enumerate() {
        let f = lookup(d.bus)?;
        b[(f.state, j)] = f.inv_inertia;
    }
    let mut c = DMatrix::<f64>::zeros(case.outputs.len(), n);
    for (i, &bus) in case.outputs.iter().enumerate() {
        let f = lookup(bus)?;
        c[(i, f.state)] = case.omega0(bus);
    }

    Ok(LinearSystem {
        a,
        b,
        c,
        disturbance_magnitudes: case.disturbances.iter().map(|d| d.magnitude).collect(),
        state_labels: labels,
        output_buses: case.outputs.clone(),
        disturbance_buses: case.disturbances.iter().map(|d| d.bus).collect(),
        frequency_states,
        registry: Vec::new(),
    })
}

/// Closes the loop with one two-state controller per device.
///
/// Device `v` measures the frequency state at its bus and injects its power
/// state through the same `1/(M S_B)` channel as a disturbance. The
/// registered derivative of `M̃_v` sits on the power-state row and that of
/// `K̃_v` on the measured-frequency row, both with value `1/(T1 T2)`.
pub fn attach_devices(base: &LinearSystem, case: &PowerSystemCase, gains: &DeviceGains) -> Result<LinearSystem> {
    if gains.len() != case.devices.len() {
        return Err(Error::invalid("gains", format!("{} gains for {} devices", gains.len(), case.devices.len())));
    }
    gains.validate()?;

    let n0 = base.states();
    let n = n0 + 2 * case.devices.len();
    let mut a = DMatrix::<f64>::zeros(n, n);
    a.view_mut((0, 0), (n0, n0)).copy_from(&base.a);
    let mut labels = base.state_labels.clone();
    let mut registry = Vec::with_capacity(2 * case.devices.len());

    for (v, dev) in case.devices.iter().enumerate() {
        let f = base.frequency_state(dev.bus).ok_or(Error::NoFrequencyState { bus: dev.bus })?;
        let p = n0 + 2 * v;
        let q = p + 1;
        let inv_t = 1.0 / (dev.t1 * dev.t2);

        a[(f.state, p)] = -f.inv_inertia;
        a[(p, p)] = -(dev.t1 + dev.t2) * inv_t;
        a[(p, q)] = 1.0;
        a[(q, p)] = -inv_t;
        a[(p, f.state)] = gains.devices[v].inertia * inv_t;
        a[(q, f.state)] = gains.devices[v].damping * inv_t;

        labels.push(StateLabel::DevicePower { device: v, bus: dev.bus });
        labels.push(StateLabel::DeviceFrequency { device: v, bus: dev.bus });
        for (kind, row) in [(GainKind::Inertia, p), (GainKind::Damping, q)] {
            registry.push(ParamEntry {
                param: ParamId { device: v, kind },
                entry: SparseEntry { row, col: f.state, value: inv_t },
            });
        }
    }

    let mut b = DMatrix::<f64>::zeros(n, base.inputs());
    b.view_mut((0, 0), (n0, base.inputs())).copy_from(&base.b);
    let mut c = DMatrix::<f64>::zeros(base.outputs(), n);
    c.view_mut((0, 0), (base.outputs(), n0)).copy_from(&base.c);

    Ok(LinearSystem {
        a,
        b,
        c,
        disturbance_magnitudes: base.disturbance_magnitudes.clone(),
        state_labels: labels,
        output_buses: base.output_buses.clone(),
        disturbance_buses: base.disturbance_buses.clone(),
        frequency_states: base.frequency_states.clone(),
        registry,
    })
}
