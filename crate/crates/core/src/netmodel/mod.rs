//! Case ingestion and state-space assembly.
//!
//! A [`PowerSystemCase`] is turned into a device-free model by
//! [`build_base_system`]: swing dynamics for every generator, an equivalent
//! motor behind a reactance for every load, and Kron reduction of all buses
//! without a dynamic unit. [`attach_devices`] closes the loop with the
//! two-pole synthetic inertia controllers and registers the sparse gain
//! derivatives of `A`.

mod case;
mod kron;
mod system;

pub use case::{load_case, Bus, Device, Disturbance, Generator, Line, Load, PowerSystemCase};
pub use kron::{kron_reduce, KRON_CONDITION_LIMIT};
pub use system::{
    attach_devices, build_base_system, system_derivative, DeviceGains, FrequencyState, Gain, GainKind, LinearSystem,
    ParamEntry, ParamId, SparseEntry, StateLabel,
};
