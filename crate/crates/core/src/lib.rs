//! Simulator for an all-optical spatial coherent Ising machine.
//!
//! `N` degenerate OPOs live on the pixels of a spatial light modulator inside
//! a parametric cavity. Each round trip the signal passes the pumped χ⁽²⁾
//! crystal ([`nlm`]), is coupled by the SLM ([`coupling`]) and loses a
//! fraction at the output coupler ([`machine`]). The binary phases of the
//! steady state are read out as Ising spins and scored against reference
//! solvers ([`oracles`]) on the graph families in [`graphs`]. [`harness`]
//! wires it all into reproducible experiments.

pub mod coupling;
pub mod error;
pub mod graphs;
pub mod harness;
pub mod machine;
pub mod nlm;
pub mod oracles;
pub mod rng;

pub use coupling::{CouplingOperator, Passivity, PixelBudget};
pub use error::{CimError, Result};
pub use graphs::{CouplingAssembly, GraphFamily, GraphInstance, GraphParams};
pub use machine::{FieldState, PumpSpec, RunConfig, Trajectory};
pub use nlm::NormalizedUnits;
pub use oracles::{AnnealSchedule, SpinConfiguration};
