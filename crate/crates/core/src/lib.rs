//! Pulse-level simulation and calibration of a microwave-activated CZ gate
//! on two fixed-frequency transmons joined by a driven transmon coupler.
//!
//! Every numerical type is generic over the real scalar ([`num::Real`],
//! implemented for `f32` and `f64`); the aliases below fix the precision.

pub mod calibrate;
pub mod device;
pub mod error;
pub mod metrics;
pub mod num;
pub mod propagator;
pub mod pulse;
pub mod spectrum;

pub use device::BasisLabel;
pub use error::{Error, Result};
pub use num::Real;

pub type Device = device::DeviceParams<f64>;
pub type Transmon = device::TransmonParams<f64>;
pub type Operator = device::OperatorMatrix<f64>;
pub type Pulse = pulse::PulseParams<f64>;
pub type Evolution = propagator::EvolutionSettings<f64>;
pub type Report = metrics::GateReport<f64>;
pub type Simulator = metrics::GateSimulator<f64>;
pub type ZzSummary = spectrum::ZZReport<f64>;
pub type Optimize = calibrate::OptimizeSettings<f64>;

pub type Device32 = device::DeviceParams<f32>;
pub type Transmon32 = device::TransmonParams<f32>;
pub type Operator32 = device::OperatorMatrix<f32>;
pub type Pulse32 = pulse::PulseParams<f32>;
pub type Evolution32 = propagator::EvolutionSettings<f32>;
pub type Report32 = metrics::GateReport<f32>;
pub type Simulator32 = metrics::GateSimulator<f32>;
pub type ZzSummary32 = spectrum::ZZReport<f32>;
pub type Optimize32 = calibrate::OptimizeSettings<f32>;
