//! Quantum filtering and master equations for open systems driven by a
//! single-photon wavepacket.

pub mod config;
pub mod ensemble;
pub mod error;
pub mod filter;
pub mod grid;
pub mod master;
pub mod opalg;
pub mod pulse;
pub mod record;
pub mod rng;
pub mod run;
pub mod slh;
pub mod twolevel;
pub mod validation;

pub use error::{Error, Result};
pub use grid::TimeGrid;
pub use opalg::{Observable, Operator, SlhTriple, C64};
pub use pulse::{Pulse, PulseShape};
pub use slh::ExtendedSystem;
