use std::collections::{BTreeMap, BTreeSet, VecDeque};

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

fn default_system_base() -> f64 {
    100.0
}
fn default_true() -> bool {
    true
}
fn default_machine_base() -> f64 {
    1.0
}
fn default_motor_fraction() -> f64 {
    0.1
}
fn default_motor_inertia() -> f64 {
    1.5
}
fn default_load_damping() -> f64 {
    2.5
}
fn default_motor_reactance() -> f64 {
    0.1
}

/// Declarative grid description, deserialised from the JSON case format.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PowerSystemCase {
    #[serde(default)]
    pub name: Option<String>,
    #[serde(default = "default_system_base")]
    pub system_base_mva: f64,
    pub nominal_frequency_hz: f64,
    /// Express rotor angles relative to the first dynamic unit, removing the
    /// rigid-body mode. Ignored when an infinite bus is present.
    #[serde(default = "default_true")]
    pub angle_reference: bool,
    pub buses: Vec<Bus>,
    #[serde(default)]
    pub lines: Vec<Line>,
    #[serde(default)]
    pub generators: Vec<Generator>,
    #[serde(default)]
    pub loads: Vec<Load>,
    #[serde(default)]
    pub devices: Vec<Device>,
    #[serde(default)]
    pub disturbances: Vec<Disturbance>,
    /// Buses whose frequency is monitored.
    pub outputs: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Bus {
    pub id: usize,
    /// Overrides the case-wide nominal frequency for this bus.
    #[serde(default)]
    pub nominal_frequency_hz: Option<f64>,
    /// Stiff grid connection with fixed angle and frequency.
    #[serde(default)]
    pub infinite: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Line {
    pub from: usize,
    pub to: usize,
    /// Small-signal synchronising coefficient `∂P/∂θ`, pu power per rad.
    pub susceptance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Generator {
    pub bus: usize,
    /// Inertia constant M in seconds on machine base.
    pub inertia: f64,
    #[serde(default)]
    pub damping: f64,
    /// Machine base in pu of the system base.
    #[serde(default = "default_machine_base")]
    pub base: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Load {
    pub bus: usize,
    pub power: f64,
    #[serde(default = "default_motor_fraction")]
    pub motor_fraction: f64,
    #[serde(default = "default_motor_inertia")]
    pub motor_inertia: f64,
    /// Frequency damping in pu per pu of load.
    #[serde(default = "default_load_damping")]
    pub damping: f64,
    /// Reactance between the bus and the equivalent motor, pu on motor base.
    #[serde(default = "default_motor_reactance")]
    pub motor_reactance: f64,
}

impl Load {
    /// Motor-equivalent rating in pu; zero means a purely static load.
    pub fn motor_rating(&self) -> f64 {
        self.motor_fraction * self.power
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Device {
    pub bus: usize,
    pub t1: f64,
    pub t2: f64,
    /// Power capacity P̄ in pu.
    pub capacity: f64,
    /// Initial synthetic inertia M̃ in seconds.
    #[serde(default)]
    pub inertia: f64,
    /// Initial synthetic damping K̃ in pu.
    #[serde(default)]
    pub damping: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Disturbance {
    pub bus: usize,
    /// Step magnitude ΔP in pu (negative for a load increase).
    pub magnitude: f64,
}

/// Parses and validates a JSON case document.
pub fn load_case(text: &str) -> Result<PowerSystemCase> {
    let case: PowerSystemCase = serde_json::from_str(text)
        .map_err(|e| Error::parse(format!("line {} column {}", e.line(), e.column()), e.to_string()))?;
    case.validate()?;
    Ok(case)
}

fn positive(entity: &str, field: &str, v: f64) -> Result<()> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        Err(Error::invalid(entity, format!("{field} must be positive, got {v}")))
    }
}

fn non_negative(entity: &str, field: &str, v: f64) -> Result<()> {
    if v.is_finite() && v >= 0.0 {
        Ok(())
    } else {
        Err(Error::invalid(entity, format!("{field} must be non-negative, got {v}")))
    }
}

impl PowerSystemCase {
    pub fn validate(&self) -> Result<()> {
        positive("case", "system_base_mva", self.system_base_mva)?;
        positive("case", "nominal_frequency_hz", self.nominal_frequency_hz)?;
        if self.buses.is_empty() {
            return Err(Error::invalid("case", "no buses"));
        }

        let mut ids = BTreeSet::new();
        for bus in &self.buses {
            if !ids.insert(bus.id) {
                return Err(Error::invalid(format!("bus {}", bus.id), "duplicate id"));
            }
            if let Some(f) = bus.nominal_frequency_hz {
                positive(&format!("bus {}", bus.id), "nominal_frequency_hz", f)?;
            }
        }
        let known = |entity: &str, bus: usize| -> Result<()> {
            if ids.contains(&bus) {
                Ok(())
            } else {
                Err(Error::invalid(entity, format!("unknown bus {bus}")))
            }
        };

        for (k, line) in self.lines.iter().enumerate() {
            let entity = format!("line {k} ({} -> {})", line.from, line.to);
            known(&entity, line.from)?;
            known(&entity, line.to)?;
            if line.from == line.to {
                return Err(Error::invalid(entity, "line connects a bus to itself"));
            }
            positive(&entity, "susceptance", line.susceptance)?;
        }

        let mut gen_buses = BTreeSet::new();
        for (k, g) in self.generators.iter().enumerate() {
            let entity = format!("generator {k} at bus {}", g.bus);
            known(&entity, g.bus)?;
            positive(&entity, "inertia", g.inertia)?;
            positive(&entity, "base", g.base)?;
            non_negative(&entity, "damping", g.damping)?;
            if !gen_buses.insert(g.bus) {
                return Err(Error::invalid(entity, "more than one generator at this bus"));
            }
            if self.bus(g.bus).is_some_and(|b| b.infinite) {
                return Err(Error::invalid(entity, "generator at an infinite bus"));
            }
        }

        let mut load_buses = BTreeSet::new();
        for (k, l) in self.loads.iter().enumerate() {
            let entity = format!("load {k} at bus {}", l.bus);
            known(&entity, l.bus)?;
            non_negative(&entity, "power", l.power)?;
            if !(0.0..=1.0).contains(&l.motor_fraction) {
                return Err(Error::invalid(
                    entity,
                    format!("motor_fraction must lie in [0, 1], got {}", l.motor_fraction),
                ));
            }
            non_negative(&entity, "damping", l.damping)?;
            if l.motor_rating() > 0.0 {
                positive(&entity, "motor_inertia", l.motor_inertia)?;
                positive(&entity, "motor_reactance", l.motor_reactance)?;
            }
            if !load_buses.insert(l.bus) {
                return Err(Error::invalid(entity, "more than one load at this bus"));
            }
            if self.bus(l.bus).is_some_and(|b| b.infinite) {
                return Err(Error::invalid(entity, "load at an infinite bus"));
            }
        }

        for (k, d) in self.devices.iter().enumerate() {
            let entity = format!("device {k} at bus {}", d.bus);
            known(&entity, d.bus)?;
            positive(&entity, "t1", d.t1)?;
            positive(&entity, "t2", d.t2)?;
            non_negative(&entity, "capacity", d.capacity)?;
            non_negative(&entity, "inertia", d.inertia)?;
            non_negative(&entity, "damping", d.damping)?;
        }
        for (k, d) in self.disturbances.iter().enumerate() {
            let entity = format!("disturbance {k} at bus {}", d.bus);
            known(&entity, d.bus)?;
            if !d.magnitude.is_finite() {
                return Err(Error::invalid(entity, "magnitude must be finite"));
            }
        }
        for (k, &bus) in self.outputs.iter().enumerate() {
            known(&format!("output {k}"), bus)?;
        }

        self.check_connected()
    }

    pub fn bus(&self, id: usize) -> Option<&Bus> {
        self.buses.iter().find(|b| b.id == id)
    }

    pub fn generator_at(&self, bus: usize) -> Option<&Generator> {
        self.generators.iter().find(|g| g.bus == bus)
    }

    pub fn load_at(&self, bus: usize) -> Option<&Load> {
        self.loads.iter().find(|l| l.bus == bus)
    }

    /// Nominal angular frequency ω0 at a bus, rad/s.
    pub fn omega0(&self, bus: usize) -> f64 {
        let hz = self.bus(bus).and_then(|b| b.nominal_frequency_hz).unwrap_or(self.nominal_frequency_hz);
        2.0 * std::f64::consts::PI * hz
    }

    fn check_connected(&self) -> Result<()> {
        let mut adjacency: BTreeMap<usize, Vec<usize>> = self.buses.iter().map(|b| (b.id, Vec::new())).collect();
        for line in &self.lines {
            adjacency.entry(line.from).or_default().push(line.to);
            adjacency.entry(line.to).or_default().push(line.from);
        }
        let root = self.buses[0].id;
        let mut seen = BTreeSet::from([root]);
        let mut queue = VecDeque::from([root]);
        while let Some(bus) = queue.pop_front() {
            for &next in &adjacency[&bus] {
                if seen.insert(next) {
                    queue.push_back(next);
                }
            }
        }
        match self.buses.iter().find(|b| !seen.contains(&b.id)) {
            Some(b) => Err(Error::Disconnected { root, bus: b.id }),
            None => Ok(()),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"{
        "nominal_frequency_hz": 50,
        "buses": [{"id": 1}, {"id": 2}],
        "lines": [{"from": 1, "to": 2, "susceptance": 5.0}],
        "generators": [{"bus": 1, "inertia": 10.0}],
        "loads": [{"bus": 2, "power": 1.0}],
        "disturbances": [{"bus": 2, "magnitude": -0.1}],
        "outputs": [1]
    }"#;

    #[test]
    fn minimal_case_loads_with_defaults() {
        let case = load_case(MINIMAL).unwrap();
        assert_eq!(case.buses.len(), 2);
        let load = &case.loads[0];
        assert_eq!(load.motor_fraction, 0.1);
        assert_eq!(load.motor_inertia, 1.5);
        assert_eq!(load.damping, 2.5);
        assert_eq!(case.generators[0].damping, 0.0);
        assert_eq!(case.system_base_mva, 100.0);
    }

    #[test]
    fn unknown_bus_in_line_names_the_line() {
        let text = MINIMAL.replace(r#""to": 2"#, r#""to": 7"#);
        let err = load_case(&text).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("line 0"), "{msg}");
        assert!(msg.contains("unknown bus 7"), "{msg}");
    }

    #[test]
    fn syntax_error_reports_location() {
        let err = load_case("{\n \"buses\": [,]\n}").unwrap_err();
        assert!(matches!(err, Error::Parse { .. }));
        assert!(err.to_string().contains("line 2"), "{err}");
    }

    #[test]
    fn disconnected_network_rejected() {
        let text = MINIMAL.replace(r#"{"id": 2}]"#, r#"{"id": 2}, {"id": 3}]"#);
        let err = load_case(&text).unwrap_err();
        assert!(matches!(err, Error::Disconnected { bus: 3, .. }), "{err}");
    }

    #[test]
    fn invariant_violations_name_entity() {
        let text = MINIMAL.replace(r#""inertia": 10.0"#, r#""inertia": -1.0"#);
        let err = load_case(&text).unwrap_err().to_string();
        assert!(err.contains("generator 0 at bus 1"), "{err}");

        let text = MINIMAL.replace(r#""power": 1.0"#, r#""power": 1.0, "motor_fraction": 1.5"#);
        let err = load_case(&text).unwrap_err().to_string();
        assert!(err.contains("load 0 at bus 2"), "{err}");
    }
}
