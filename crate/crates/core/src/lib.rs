//! Dissipative flow networks: a Newton solver for the network-flow equations
//! through their convex energy form, and two max-throughput solvers that
//! bracket the optimum from above (energy-function penalty heuristic) and
//! below (McCormick relaxation with branch-and-bound).

pub mod diagnostics;
pub mod dissipation;
pub mod energy;
pub mod error;
pub mod format;
pub mod gas;
pub mod instances;
pub mod linalg;
pub mod network;
pub mod micp;
pub mod nf;
pub mod parallel;
pub mod report;
mod barrier;
mod projected;
pub mod throughput;

pub use barrier::BarrierSettings;
pub use dissipation::DissipationLaw;
pub use error::{ModelError, OptimizeError, SolveError};
pub use network::{Edge, FlowState, Injections, Network, NodeSpec, Scenario};
pub use nf::{solve_nf, NewtonSettings, NfSolution};
