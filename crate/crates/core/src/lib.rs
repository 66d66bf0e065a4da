//! Reduced-order thermal modelling of an extruder barrel.
//!
//! The crate builds axisymmetric finite-volume RC networks of the barrel,
//! screw conveyor and screw core ([`mesh`], [`fvnet`]), turns them into linear
//! state-space models ([`lti`]), checks them against a finite-element
//! reference ([`feref`]), calibrates the unknown heat-transfer parameters
//! from sensor traces ([`calib`]) and estimates the heat flow between barrel
//! and granulate with a Kalman disturbance observer ([`sensor`]).

pub mod calib;
pub mod error;
pub mod feref;
pub mod fvnet;
pub mod lti;
pub mod mesh;
pub mod reference;
pub mod sensor;
pub mod timeseries;

pub use error::{Error, Result};
pub use timeseries::TimeSeries;
