//! Discrete-event simulation of a federated device fleet.
//!
//! Builds a synthetic fleet from a scenario file, drives the on-device
//! runtime and the server under virtual time, and executes one of the
//! federated programs (plain tasks, tuning, evaluation or learning). All
//! randomness derives from the scenario's master seed, so single-threaded
//! runs are byte-for-byte reproducible and parallel runs match them.

pub mod clock;
pub mod fleet;
pub mod gen;
pub mod http_transport;
pub mod run;
pub mod scenario;

pub use clock::{EventQueue, VirtualClock};
pub use fleet::{SimDevice, SimFleet, SimTransport};
pub use http_transport::HttpTransport;
pub use run::{hidden_wer_oracle, run_simulation, RunSummary, SimError};
pub use scenario::{Program, ScenarioConfig};
