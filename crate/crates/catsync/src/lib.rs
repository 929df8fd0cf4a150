//! Dissipatively coupled cat-map suspension / clock flow.
//!
//! A hyperbolic suspension (Arnold's cat map kicked every 2π) is coupled to a
//! clock through a weak dissipative interaction. This crate simulates the
//! flow, constructs the attractive invariant manifold and the tangent-space
//! conjugation order by order in the coupling ε, and computes the Lyapunov
//! spectrum both perturbatively and by direct tangent propagation, together
//! with the Kaplan–Yorke dimension and the synchronization transition scan.

pub mod catmap;
pub mod cli;
pub mod config;
pub mod constants;
pub mod coupling;
pub mod flow;
pub mod grid;
pub mod lyapunov;
pub mod series;
pub mod tangent;
pub mod tangent_trees;
pub mod trees;
pub mod trig;

pub use catmap::{CatMap, FullState, Sign, TorusPoint};
pub use constants::{solve_w0, PhaseConstants};
pub use coupling::CouplingSpec;
pub use flow::{flow_segment, poincare_map, tangent_step};
pub use grid::GridSpec;
pub use trig::TrigPoly;
