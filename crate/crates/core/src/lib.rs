//! Event-triggered distributed resource allocation with population games.
//!
//! Agents on an undirected graph share a fixed resource. Each agent's
//! fitness is the gradient of a concave quadratic potential; the distributed
//! replicator dynamic moves resource along edges toward higher fitness until
//! all fitness values agree, which is the optimal allocation. Agents only
//! broadcast when their local gap exceeds a trigger threshold.
//!
//! * [`graph`]: topology, population-weighted Laplacian, components.
//! * [`game`]: quadratic potentials, dispatch costs, the KKT allocation oracle.
//! * [`dynamics`]: replicator, fitness and sampled fields; RK4.
//! * [`trigger`]: trigger rules, Lyapunov monitor, Zeno lower bounds.
//! * [`scenario`]: JSON configs, the run loop, CSV/JSON outputs.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod dynamics;
pub mod error;
pub mod game;
pub mod graph;
pub mod scenario;
pub mod trigger;

pub use error::{Error, Result};
pub use game::{kkt_allocate, DispatchCosts, KktSolution, QuadraticPotential};
pub use graph::{Graph, WeightedLaplacian};
