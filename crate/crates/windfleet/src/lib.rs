//! Wind-aware simulation and fleet optimization for electric VTOL
//! vertiport networks.
//!
//! The crate covers the full study loop: wind field ingestion and
//! synthesis, wind-triangle flight dynamics with a seven-phase mission
//! profile, nonlinear charging, stochastic passenger demand, daily
//! profile clustering, time-expanded integer programming for fleet
//! sizing, and a deterministic discrete-event simulator that replays
//! optimized schedules under realistic wind.

pub mod angle;
pub mod charging;
pub mod cluster;
pub mod demand;
pub mod flight;
pub mod geo;
pub mod opt;
pub mod pipeline;
pub mod sim;
pub mod soc;
pub mod timegrid;
pub mod units;
pub mod wind;

pub use angle::Angle;
pub use soc::SocLadder;
pub use timegrid::TimeGrid;
