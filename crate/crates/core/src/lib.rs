//! Simulation and identification of an active/passive mechanical pair: a passive
//! body carried by a driven platform through Coulomb friction and stopped by an
//! elastic frame with Hunt-Crossley contact.
//!
//! - [`model`]: parameters, state, events, signum functions.
//! - [`friction`]: stick/slip coupling between the two bodies.
//! - [`contact`]: contact force, restitution and hysteresis loops.
//! - [`hybrid`]: event-driven integration and the two experimental scenarios.
//! - [`signal`]: trace I/O, differentiation and zero-phase filtering.
//! - [`ident`]: derivative-free fitting of contact parameters to a trace.
//! - [`cli`]: the `impact-pair` command line.


pub mod cli;
pub mod contact;
pub mod error;
pub mod friction;
pub mod hybrid;
pub mod ident;
pub mod model;
pub mod signal;

pub use error::{Error, Result};
pub use model::{Event, EventKind, Mode, SimState, SystemParams, Trajectory};
