//! Deterministic building blocks for measuring reliable transfers over
//! emulated geostationary satellite paths.
//!
//! The crate is `no_std` (it needs `alloc`) and never touches the clock, the
//! filesystem or sockets. Every operation takes the current time as an
//! argument, so the same code runs under a virtual clock in [`sim`] and under
//! a wall-clock driver in the std companion crate.
//!
//! * [`linkem`] asymmetric duplex link emulator (rate, drop-tail queue, loss, delay)
//! * [`scenarios`] built-in TERR/SAT/SATL paths and the scenario file format
//! * [`wire`], [`cc`], [`recovery`], [`endpoint`] the reference transfer protocol
//! * [`trace`] and [`analysis`] capture records and the metrics derived from them
//! * [`sim`] a complete transfer between reference endpoints on virtual time

#![no_std]

extern crate alloc;

pub mod analysis;
pub mod cc;
pub mod endpoint;
pub mod intervals;
pub mod linkem;
pub mod recovery;
pub mod results;
pub mod scenarios;
pub mod sim;
pub mod trace;
pub mod wire;

pub use analysis::{Status, TransferOutcome};
pub use cc::{Algorithm, CongestionState, Phase};
pub use intervals::IntervalSet;
pub use linkem::{Channel, Direction, LinkDirectionParams, PacketFate};
pub use scenarios::ScenarioSpec;
pub use trace::{PacketRecord, Tap, Trace};

/// Largest datagram accepted anywhere in the harness, in bytes.
pub const MTU: usize = 1500;
